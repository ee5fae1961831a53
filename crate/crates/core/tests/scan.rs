use cptkit::constants::two_pi_mhz;
use cptkit::cpt::*;
use cptkit::scan::*;
use proptest::prelude::*;

fn scan_hz(f: &[f64], counts: &[f64], direction: ScanDirection) -> ScanRecord {
    let samples = f
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(i, (&drive, &counts))| ScanSample {
            timestamp: i as f64 * 0.05,
            drive,
            counts,
        })
        .collect();
    ScanRecord::new(samples, direction, DriveUnit::Hz).unwrap()
}

#[test]
fn voltage_ramp_maps_to_frequency_ramp() {
    let scan = ScanRecord::new(
        (0..20)
            .map(|i| ScanSample {
                timestamp: 0.1 * i as f64 + 0.03,
                drive: 0.05 * i as f64,
                counts: 5000.0,
            })
            .collect(),
        ScanDirection::Up,
        DriveUnit::V,
    )
    .unwrap();
    let log = FrequencyLog::new((0..=25).map(|i| (0.1 * i as f64, 484e12 + 1e8 * i as f64)).collect()).unwrap();
    let f = correlate_frequency(&scan, &log).unwrap();
    let steps: Vec<f64> = f.samples.windows(2).map(|w| w[1].drive - w[0].drive).collect();
    for s in &steps {
        assert!((s - 1e8).abs() < 1e-2, "{s}");
    }
}

#[test]
fn sample_outside_log_is_rejected() {
    let scan = ScanRecord::new(
        vec![ScanSample { timestamp: 5.0, drive: 0.0, counts: 1.0 }],
        ScanDirection::Up,
        DriveUnit::V,
    )
    .unwrap();
    let log = FrequencyLog::new(vec![(0.0, 1.0), (1.0, 2.0)]).unwrap();
    assert!(matches!(correlate_frequency(&scan, &log), Err(ScanError::OutOfRange { .. })));
}

#[test]
fn shifted_duplicate_overlaps() {
    let f: Vec<f64> = (0..11).map(|i| 1e6 * i as f64).collect();
    let shifted: Vec<f64> = f.iter().map(|v| v + 3e6).collect();
    let a = scan_hz(&f, &[3000.0; 11], ScanDirection::Up);
    let b = scan_hz(&shifted, &[5000.0; 11], ScanDirection::Up);
    let binned = bin_scans(&[a, b], 0, false).unwrap();
    for (k, bin) in binned.contributions.iter().enumerate() {
        let scans: Vec<usize> = bin.iter().map(|c| c.scan).collect();
        if k >= 3 {
            assert_eq!(scans, vec![0, 1], "bin {k}");
        } else {
            assert_eq!(scans, vec![0], "bin {k}");
        }
    }
    assert_eq!(binned.n_outside, 3);
    let r = threshold_and_average(&binned, DEFAULT_MIN_RATE).unwrap();
    assert_eq!(r.mean_counts[5], Some(4000.0));
    assert_eq!(r.mean_counts[0], Some(3000.0));
}

#[test]
fn dark_segment_only_affects_its_bins() {
    let f: Vec<f64> = (0..20).map(|i| 1e6 * i as f64).collect();
    let bright_a = scan_hz(&f, &[6000.0; 20], ScanDirection::Up);
    let bright_b = scan_hz(&f, &[8000.0; 20], ScanDirection::Up);
    let mut jumpy = vec![10_000.0; 20];
    for c in &mut jumpy[5..9] {
        *c = 400.0;
    }
    let dark = scan_hz(&f, &jumpy, ScanDirection::Up);
    let r = threshold_and_average(&bin_scans(&[bright_a, bright_b, dark], 0, false).unwrap(), DEFAULT_MIN_RATE).unwrap();
    for k in 0..20 {
        if (5..9).contains(&k) {
            assert_eq!(r.mean_counts[k], Some(7000.0));
            assert_eq!(r.n_contributing[k], 2);
        } else {
            assert_eq!(r.mean_counts[k], Some(8000.0));
            assert_eq!(r.n_contributing[k], 3);
        }
    }
    assert_eq!(r.n_rejected_samples, 4);
}

#[test]
fn centering_finds_simulated_cpt_dip() {
    let optical = OpticalDecay::from_lifetime(4.55e-9, 2.4).unwrap();
    let p = CptFitParams::snv(two_pi_mhz(19.3), two_pi_mhz(164.0), 1.0 / 31e-12);
    let grid = default_detuning_grid(&p, &optical);
    let s = simulate_cpt_spectrum(&p, &optical, &grid, SteadyStateMethod::Direct).unwrap();
    let fwhm = estimate_dip_fwhm_hz(&p, &optical);
    let offset = 484.1e12 + 0.37 * fwhm;
    let counts: Vec<f64> = s.values.iter().map(|v| population_to_counts(*v, 30_000.0, 500.0)).collect();
    let freqs: Vec<f64> = grid.iter().map(|d| d + offset).collect();
    let spec = threshold_and_average(
        &bin_scans(&[scan_hz(&freqs, &counts, ScanDirection::Up)], 0, false).unwrap(),
        DEFAULT_MIN_RATE,
    )
    .unwrap();
    let centred = center_spectrum(&spec).unwrap();
    let err = centred.center_frequency.unwrap() - offset;
    assert!(err.abs() < 0.02 * fwhm, "offset error {err} Hz vs FWHM {fwhm}");
    let (pop, flags) = counts_to_population(&centred, 30_000.0, 500.0).unwrap();
    assert!(flags.clipped.is_empty() && flags.above_one.is_empty());
    let truth = s.interpolate(0.0);
    assert!((pop.interpolate(0.0) - truth).abs() < 1e-3 * truth.max(1e-3) + 1e-6);
}

#[test]
fn reduction_is_bit_identical_and_order_free() {
    let f: Vec<f64> = (0..30).map(|i| 484e12 + 7.3e6 * i as f64).collect();
    let dip = |i: usize| 9000.0 - 4000.0 / (1.0 + ((i as f64 - 14.3) / 3.0).powi(2));
    let a = scan_hz(&f, &(0..30).map(|i| dip(i) * 1.01).collect::<Vec<_>>(), ScanDirection::Up);
    let b = scan_hz(
        &f.iter().map(|x| x + 2.1e6).collect::<Vec<_>>(),
        &(0..30).map(|i| if (10..13).contains(&i) { 900.0 } else { dip(i) * 0.98 }).collect::<Vec<_>>(),
        ScanDirection::Up,
    );
    let c = scan_hz(&f, &(0..30).map(|i| dip(i) + 13.7).collect::<Vec<_>>(), ScanDirection::Up);
    let log = FrequencyLog::new(vec![(0.0, 0.0), (100.0, 0.0)]).unwrap();
    let settings = ReductionSettings::default();
    let one = reduce_scans(&[a.clone(), b.clone(), c.clone()], &log, &settings).unwrap();
    let two = reduce_scans(&[a.clone(), b.clone(), c.clone()], &log, &settings).unwrap();
    assert_eq!(
        serde_json::to_string(&one.spectrum).unwrap(),
        serde_json::to_string(&two.spectrum).unwrap()
    );
    let reordered = reduce_scans(&[a, c, b], &log, &settings).unwrap();
    assert_eq!(one.spectrum.mean_counts, reordered.spectrum.mean_counts);
    assert_eq!(one.spectrum.n_contributing, reordered.spectrum.n_contributing);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thresholding_only_removes_low_values(counts in prop::collection::vec(0.0f64..10_000.0, 3 * 12)) {
        let f: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let scans: Vec<ScanRecord> = counts
            .chunks(12)
            .map(|c| scan_hz(&f, c, ScanDirection::Up))
            .collect();
        let binned = bin_scans(&scans, 0, false).unwrap();
        let all = threshold_and_average(&binned, 0.0).unwrap();
        if let Ok(kept) = threshold_and_average(&binned, DEFAULT_MIN_RATE) {
            for (a, k) in all.mean_counts.iter().zip(&kept.mean_counts) {
                if let (Some(a), Some(k)) = (a, k) {
                    prop_assert!(*k >= *a - 1e-9);
                }
            }
            for (k, bin) in binned.contributions.iter().enumerate() {
                let bright = bin.iter().all(|c| c.counts >= DEFAULT_MIN_RATE);
                if bright {
                    prop_assert_eq!(all.mean_counts[k], kept.mean_counts[k]);
                }
            }
        }
    }

    #[test]
    fn population_is_affine_and_monotone(c1 in 0.0f64..1e5, c2 in 0.0f64..1e5, f_sat in 1e3f64..1e5) {
        let spec = ReducedSpectrum {
            bin_centers: vec![0.0, 1.0],
            mean_counts: vec![Some(c1), Some(c2)],
            n_contributing: vec![1, 1],
            center_frequency: Some(0.0),
            direction: Some(ScanDirection::Up),
            min_rate: 0.0,
            rejected_bins: vec![],
            n_rejected_samples: 0,
        };
        let (p, _) = counts_to_population(&spec, f_sat, DEFAULT_BACKGROUND).unwrap();
        if c1 <= c2 {
            prop_assert!(p.values[0] <= p.values[1]);
        }
        for (c, v) in [c1, c2].iter().zip(&p.values) {
            let raw = 0.5 * (c - DEFAULT_BACKGROUND) / f_sat;
            prop_assert!((v - raw.max(0.0)).abs() < 1e-15);
        }
    }
}
