use approx::assert_relative_eq;
use cptkit::constants::{two_pi_mhz, PLANCK, BOLTZMANN};
use cptkit::cpt::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn optical() -> OpticalDecay {
    OpticalDecay::from_lifetime(4.55e-9, 2.4).unwrap()
}

fn dataset(oc_mhz: f64, od_mhz: f64, t_minus: f64) -> CptFitParams {
    CptFitParams::snv(two_pi_mhz(oc_mhz), two_pi_mhz(od_mhz), 1.0 / t_minus)
}

fn coarse_grid(p: &CptFitParams) -> Vec<f64> {
    let w = estimate_dip_fwhm_hz(p, &optical());
    linspace(-6.0 * w, 6.0 * w, 61)
}

fn direct(p: &CptFitParams, grid: &[f64]) -> CptSpectrum {
    simulate_cpt_spectrum(p, &optical(), grid, SteadyStateMethod::Direct).unwrap()
}

fn depth_and_width(s: &CptSpectrum) -> (f64, f64) {
    let tail = s.values[0];
    let dip = s.interpolate(0.0);
    let half = 0.5 * (tail + dip);
    let inside: Vec<f64> = s
        .detunings_d
        .iter()
        .zip(&s.values)
        .filter(|(_, v)| **v < half)
        .map(|(x, _)| *x)
        .collect();
    (tail - dip, inside.last().unwrap() - inside[0])
}

#[test]
fn boltzmann_factor_values() {
    let r = boltzmann_gamma_plus(1.0, 831e9, 3.86);
    let expected = (-PLANCK * 831e9 / (BOLTZMANN * 3.86)).exp();
    assert_relative_eq!(r, expected, max_relative = 1e-15);
    assert!((r - 3.26e-5).abs() < 0.01e-5);
    assert!((1.0 / r - 3.07e4).abs() < 0.01e4);
    assert!((boltzmann_gamma_plus(5.0, 831e9, 1e9) / 5.0 - 1.0).abs() < 1e-6);
    assert_eq!(boltzmann_gamma_plus(0.0, 831e9, 3.86), 0.0);
}

#[test]
fn paper_lifetimes_are_consistent_with_the_boltzmann_ratio() {
    let ratio: f64 = 958e-9 / 31e-12;
    assert!((ratio - 3.07e4).abs() / 3.07e4 < 0.02);
}

#[test]
fn gamma_minus_never_deepens_the_dip() {
    let base = dataset(19.3, 164.0, 31e-12);
    let grid = coarse_grid(&base);
    let mut last = f64::INFINITY;
    for t in [80e-12, 40e-12, 20e-12, 10e-12, 5e-12, 1e-12] {
        let (depth, _) = depth_and_width(&direct(&CptFitParams { gamma_minus: 1.0 / t, ..base }, &grid));
        assert!(depth <= last + 1e-12, "T₋ = {t}: depth {depth} > {last}");
        last = depth;
    }
}

#[test]
fn omega_d_widens_and_deepens() {
    let base = dataset(19.3, 120.0, 31e-12);
    let wide = dataset(19.3, 240.0, 31e-12);
    let grid = coarse_grid(&wide);
    let (d0, w0) = depth_and_width(&direct(&base, &grid));
    let (d1, w1) = depth_and_width(&direct(&wide, &grid));
    assert!(d1 > d0 && w1 > w0, "depth {d0}→{d1}, width {w0}→{w1}");
}

#[test]
fn omega_c_raises_the_tail() {
    let grid = coarse_grid(&dataset(20.0, 164.0, 31e-12));
    let lo = direct(&dataset(10.0, 164.0, 31e-12), &grid);
    let hi = direct(&dataset(20.0, 164.0, 31e-12), &grid);
    assert!(hi.values[0] > lo.values[0]);
}

#[test]
fn integrated_spectrum_is_symmetric() {
    let p = dataset(22.9, 306.0, 26e-12);
    let w = estimate_dip_fwhm_hz(&p, &optical());
    let grid = linspace(-3.0 * w, 3.0 * w, 7);
    let s = simulate_cpt_spectrum(&p, &optical(), &grid, SteadyStateMethod::default()).unwrap();
    for i in 0..3 {
        assert!((s.values[i] - s.values[6 - i]).abs() < 1e-7);
    }
    let d = direct(&p, &grid);
    for (a, b) in s.values.iter().zip(&d.values) {
        assert!((a - b).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dip_exists_for_strong_d_drive(od in 100.0f64..400.0, oc in 5.0f64..30.0, t in 5e-12f64..40e-12) {
        let p = dataset(oc, od, t);
        let m = CptModel::new(p, optical(), SteadyStateMethod::Direct);
        let w = estimate_dip_fwhm_hz(&p, &optical());
        prop_assert!(m.population(0.0).unwrap() < m.population(6.0 * w).unwrap());
    }

    #[test]
    fn every_report_obeys_detailed_balance(oc in 5.0f64..30.0, od in 100.0f64..400.0, t in 5e-12f64..80e-12) {
        let p = dataset(oc, od, t);
        let grid = linspace(-5e9, 5e9, 11);
        let r = CptFitReport::at(&direct(&p, &grid), &optical(), p).unwrap();
        let expected = (PLANCK * p.delta_12 / (BOLTZMANN * p.temperature)).exp();
        prop_assert!(((r.t_plus / r.t_minus) / expected - 1.0).abs() < 1e-9);
    }
}

#[test]
fn fit_rejects_short_or_fluorescence_spectra() {
    let p = dataset(19.3, 164.0, 31e-12);
    let short = direct(&p, &linspace(-1e9, 1e9, 9));
    assert!(matches!(
        fit_cpt(&short, &optical(), &p, &CptFitSettings::default()),
        Err(CptError::BadInput(_))
    ));
    let mut fl = direct(&p, &linspace(-1e9, 1e9, 20));
    fl.kind = SpectrumKind::Fluorescence;
    assert!(matches!(
        fit_cpt(&fl, &optical(), &p, &CptFitSettings::default()),
        Err(CptError::BadInput(_))
    ));
}

#[test]
fn flat_spectrum_is_unidentifiable() {
    let grid = linspace(-5e9, 5e9, 41);
    let flat = CptSpectrum::new(grid, vec![0.05; 41], SpectrumKind::Population).unwrap();
    let settings = CptFitSettings {
        starts: 3,
        ..CptFitSettings::default()
    };
    let r = fit_cpt(&flat, &optical(), &dataset(19.3, 164.0, 31e-12), &settings);
    match r {
        Err(CptError::FitDiverged(_)) => {}
        Ok(report) => {
            let s = sensitivity(&report, 0.05).unwrap();
            assert!(s.iter().find(|s| s.parameter == FitParameter::GammaMinus).unwrap().flagged);
        }
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn noisy_round_trip_within_ten_percent() {
    let truth = dataset(19.3, 164.0, 31e-12);
    let clean = direct(&truth, &coarse_grid(&truth));
    let scale = clean.values.iter().copied().fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.01 * scale).unwrap();
    let values = clean
        .values
        .iter()
        .map(|v| (v + noise.sample(&mut rng)).max(0.0))
        .collect();
    let noisy = CptSpectrum::new(clean.detunings_d.clone(), values, SpectrumKind::Population).unwrap();
    let guess = dataset(25.0, 130.0, 20e-12);
    let settings = CptFitSettings {
        starts: 6,
        ..CptFitSettings::default()
    };
    let r = fit_cpt(&noisy, &optical(), &guess, &settings).unwrap();
    for p in FitParameter::ALL {
        let rel = (r.params.get(p) / truth.get(p) - 1.0).abs();
        assert!(rel < 0.10, "{p:?} off by {rel}");
    }
    // Refitting from the optimum is a fixed point.
    let again = fit_cpt(&noisy, &optical(), &r.params, &CptFitSettings { starts: 1, ..settings }).unwrap();
    for p in FitParameter::ALL {
        assert!((again.params.get(p) / r.params.get(p) - 1.0).abs() < 1e-3);
    }
}

#[test]
fn sensitivity_grows_with_fraction() {
    let p = dataset(22.9, 306.0, 26e-12);
    let report = CptFitReport::at(&direct(&p, &coarse_grid(&p)), &optical(), p).unwrap();
    let mut prev = vec![0.0; 3];
    for f in [0.01, 0.02, 0.05, 0.1] {
        let s = sensitivity(&report, f).unwrap();
        for (k, item) in s.iter().enumerate() {
            assert!(item.uncertainty >= prev[k], "{:?} at fraction {f}", item.parameter);
            prev[k] = item.uncertainty;
        }
    }
}

#[test]
fn unreachable_fraction_is_unbounded() {
    let p = dataset(7.1, 110.0, 31e-12);
    let report = CptFitReport::at(&direct(&p, &coarse_grid(&p)), &optical(), p).unwrap();
    assert!(matches!(
        sensitivity(&report, 1e6),
        Err(CptError::UnboundedSensitivity { .. })
    ));
}

#[test]
fn dephasing_bound_is_finite_and_baseline_matches() {
    let p = dataset(20.1, 272.0, 32e-12);
    let report = CptFitReport::at(&direct(&p, &coarse_grid(&p)), &optical(), p).unwrap();
    let b = dephasing_upper_bound(&report, 0.05).unwrap();
    assert_relative_eq!(b.baseline_visibility, report.visibility, max_relative = 1e-12);
    assert!(b.time.is_finite() && b.time > 0.0);
    let v = CptModel::new(
        CptFitParams { gamma_deph: b.gamma_deph, ..p },
        optical(),
        SteadyStateMethod::Direct,
    )
    .visibility(report.tail_detuning)
    .unwrap();
    assert!(v <= 0.95 * b.baseline_visibility * (1.0 + 1e-9));
}
#[test]
fn insensitive_parameters_are_flagged_not_fatal() {
    let p = dataset(7.1, 110.0, 31e-12);
    let report = CptFitReport::at(&direct(&p, &coarse_grid(&p)), &optical(), p).unwrap();
    let s = sensitivity(&report, 1.0).unwrap();
    let od = s.iter().find(|s| s.parameter == FitParameter::OmegaD).unwrap();
    assert!(od.flagged && od.uncertainty.is_infinite());
    // ρ₃₃ grows as Ω_C², so doubling it is within reach.
    let oc = s.iter().find(|s| s.parameter == FitParameter::OmegaC).unwrap();
    assert!(oc.up.is_some());
}
