use approx::assert_relative_eq;
use cptkit::cpt::linspace;
use cptkit::curvefit::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn check_all(r: &LineFitResult, truth: &[(&str, f64)], tol: f64) {
    for (name, v) in truth {
        assert!(
            rel(r.param(name), *v) < tol,
            "{name}: fitted {} vs true {v}",
            r.param(name)
        );
    }
}

#[test]
fn lorentzian_round_trip() {
    let p = [2.0, 0.3e9, 1.2e9, 0.1];
    let d = Curve1D::from_fn(linspace(-5e9, 5e9, 101), |x| lorentzian(&p, x)).unwrap();
    let r = fit_lorentzian(&d).unwrap();
    check_all(&r, &[("amplitude", 2.0), ("center", 0.3e9), ("fwhm", 1.2e9), ("background", 0.1)], 1e-6);
    assert!(r.param_errors.values().all(|e| e.is_finite() && *e >= 0.0));
}

#[test]
fn lorentzian_on_absolute_frequency_axis() {
    let f0 = 484.13e12;
    let p = [5000.0, f0 + 0.2e9, 0.4e9, 800.0];
    let d = Curve1D::from_fn(linspace(f0 - 2e9, f0 + 2e9, 161), |x| lorentzian(&p, x)).unwrap();
    let r = fit_lorentzian(&d).unwrap();
    assert!((r.param("center") - p[1]).abs() < 1e-4 * p[2]);
    assert_relative_eq!(r.fwhm.unwrap(), p[2], max_relative = 1e-6);
}

#[test]
fn lorentzian_symmetric_center() {
    let d = Curve1D::from_fn(linspace(-3.0, 5.0, 81), |x| 1.0 / (1.0 + (x - 1.0).powi(2))).unwrap();
    let r = fit_lorentzian(&d).unwrap();
    assert!((r.param("center") - 1.0).abs() < 1e-9);
}

#[test]
fn lorentzian_on_pure_noise_is_rejected_or_poor() {
    // Seed recorded for reproducibility.
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let x = linspace(-10.0, 10.0, 101);
    let y: Vec<f64> = x.iter().map(|_| noise.sample(&mut rng)).collect();
    let d = Curve1D::new(x, y, None).unwrap();
    match fit_lorentzian(&d) {
        Err(FitError::FitDiverged(_)) => {}
        Ok(r) => assert!(r.r_squared < 0.2, "R² = {}", r.r_squared),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn double_lorentzian_separated_peaks() {
    let p = [1.0, -2.0e9, 0.8e9, 0.6, 3.0e9, 1.1e9, 0.05];
    let d = Curve1D::from_fn(linspace(-8e9, 8e9, 201), |x| double_lorentzian(&p, x)).unwrap();
    let r = fit_double_lorentzian(&d).unwrap();
    check_all(
        &r,
        &[
            ("amplitude_1", 1.0),
            ("center_1", -2.0e9),
            ("fwhm_1", 0.8e9),
            ("amplitude_2", 0.6),
            ("center_2", 3.0e9),
            ("fwhm_2", 1.1e9),
        ],
        1e-2,
    );
    assert_relative_eq!(r.derived["fwhm_mean"], 0.95e9, max_relative = 1e-2);
}

#[test]
fn double_lorentzian_identical_centers_are_degenerate() {
    let p = [1.0, 0.0, 1.0, 0.6, 0.0, 3.0, 0.0];
    let d = Curve1D::from_fn(linspace(-10.0, 10.0, 201), |x| double_lorentzian(&p, x)).unwrap();
    match fit_double_lorentzian(&d) {
        Err(FitError::DegenerateComponents { fallback }) => {
            assert_eq!(fallback.model, LineModel::Lorentzian);
            assert!(fallback.param("center").abs() < 1e-6);
        }
        other => panic!("expected DegenerateComponents, got {other:?}"),
    }
}

#[test]
fn double_lorentzian_zero_amplitude_flags_component() {
    let p = [1.0, -1.0, 0.7, 0.0, 2.0, 0.7, 0.0];
    let d = Curve1D::from_fn(linspace(-6.0, 6.0, 121), |x| double_lorentzian(&p, x)).unwrap();
    let r = fit_double_lorentzian(&d).unwrap();
    let flagged: Vec<usize> = r
        .flags
        .iter()
        .filter_map(|f| match f {
            FitFlag::UnconstrainedComponent(k) => Some(*k),
            _ => None,
        })
        .collect();
    assert_eq!(flagged.len(), 1, "flags: {:?}", r.flags);
    let live = 3 - flagged[0];
    let c = r.param(&format!("center_{live}"));
    assert!((c + 1.0).abs() < 1e-6, "surviving center {c}");
    assert_relative_eq!(r.fwhm.unwrap(), 0.7, max_relative = 1e-6);
}

#[test]
fn gaussian_prefit_symmetric_dip() {
    let d = Curve1D::from_fn(linspace(-4.0, 6.0, 101), |x| 3.0 - 1.0 / (1.0 + (x - 1.0).powi(2))).unwrap();
    assert!((fit_gaussian_prefit(&d).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn gaussian_round_trip() {
    let p = [0.7, 0.25, 0.9, 2.0];
    let d = Curve1D::from_fn(linspace(-5.0, 5.0, 101), |x| inverted_gaussian(&p, x)).unwrap();
    let r = fit_inverted_gaussian(&d).unwrap();
    check_all(&r, &[("depth", 0.7), ("center", 0.25), ("sigma", 0.9), ("background", 2.0)], 1e-6);
}

#[test]
fn exponential_round_trip() {
    let p = [1000.0, 5e-9, 20.0];
    let d = Curve1D::from_fn(linspace(1e-9, 40e-9, 200), |t| exponential(&p, t)).unwrap();
    let r = fit_exponential_lifetime(&d).unwrap();
    check_all(&r, &[("amplitude", 1000.0), ("tau", 5e-9), ("background", 20.0)], 1e-6);
}

#[test]
fn lifetime_limited_width_inverts() {
    let tau = 4.55e-9;
    let gamma = 1.0 / (2.0 * std::f64::consts::PI * tau);
    assert!((gamma - 35e6).abs() < 0.05e6);
}

#[test]
fn saturation_round_trip() {
    let powers: Vec<f64> = [5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0]
        .iter()
        .map(|p| p * 1e-9)
        .collect();
    let d = Curve1D::from_fn(powers, |p| saturation(&[30.0, 100e-9], p, 0.5)).unwrap();
    let r = fit_saturation(&d, SATURATION_BACKGROUND_KCPS).unwrap();
    check_all(&r, &[("f_sat", 30.0), ("p_sat", 100e-9)], 1e-6);
    assert_relative_eq!(r.evaluate(100e-9), 15.5, max_relative = 1e-6);
}

#[test]
fn g2_round_trip() {
    let p = [0.9, 0.35, 2.5e-9, 60e-9, 0.4e-9];
    let d = Curve1D::from_fn(linspace(-150e-9, 150e-9, 601), |t| g2(&p, t)).unwrap();
    let r = fit_g2(&d).unwrap();
    check_all(
        &r,
        &[("p", 0.9), ("c", 0.35), ("tau_a", 2.5e-9), ("tau_b", 60e-9), ("offset", 0.4e-9)],
        1e-3,
    );
    let o = r.param("offset");
    assert!((r.evaluate(o) - r.derived["g2_zero"]).abs() < 1e-9);
}

#[test]
fn weights_are_used() {
    // A single wild point with a huge error bar barely moves the fit.
    let p = [1.0, 0.0, 2.0, 0.0];
    let x = linspace(-6.0, 6.0, 61);
    let mut y: Vec<f64> = x.iter().map(|&v| lorentzian(&p, v)).collect();
    y[10] += 0.3;
    let mut err = vec![0.01; x.len()];
    err[10] = 1e6;
    let weighted = fit_lorentzian(&Curve1D::new(x.clone(), y.clone(), Some(err)).unwrap()).unwrap();
    let plain = fit_lorentzian(&Curve1D::new(x, y, None).unwrap()).unwrap();
    assert!(rel(weighted.fwhm.unwrap(), 2.0) < 1e-6);
    assert!(rel(plain.fwhm.unwrap(), 2.0) > 1e-3);
}

#[test]
fn refit_of_fitted_model_is_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = linspace(-5.0, 5.0, 101);
    let y: Vec<f64> = x
        .iter()
        .map(|&v| lorentzian(&[1.0, 0.2, 1.5, 0.1], v) + 0.02 * (rng.random::<f64>() - 0.5))
        .collect();
    let first = fit_lorentzian(&Curve1D::new(x.clone(), y, None).unwrap()).unwrap();
    let resampled = Curve1D::from_fn(x, |v| first.evaluate(v)).unwrap();
    let second = fit_lorentzian(&resampled).unwrap();
    for (name, v) in &first.params {
        assert!(rel(second.param(name), *v) < 1e-3, "{name}");
    }
}

fn noisy_lorentzian(seed: u64) -> Curve1D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let x = linspace(-5.0, 5.0, 81);
    let y: Vec<f64> = x
        .iter()
        .map(|&v| lorentzian(&[1.0, 0.3, 1.4, 0.2], v) + noise.sample(&mut rng))
        .collect();
    let err = vec![0.01; x.len()];
    Curve1D::new(x, y, Some(err)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scale_equivariance(seed in 0u64..1000, k in 0.01f64..100.0) {
        let d = noisy_lorentzian(seed);
        let scaled = Curve1D::new(
            d.x.clone(),
            d.y.iter().map(|v| v * k).collect(),
            d.y_err.as_ref().map(|e| e.iter().map(|v| v * k).collect()),
        ).unwrap();
        let a = fit_lorentzian(&d).unwrap();
        let b = fit_lorentzian(&scaled).unwrap();
        prop_assert!(rel(b.param("amplitude"), k * a.param("amplitude")) < 1e-8);
        prop_assert!(rel(b.param("background"), k * a.param("background")) < 1e-8);
        prop_assert!((b.param("center") - a.param("center")).abs() < 1e-8 * a.fwhm.unwrap());
        prop_assert!(rel(b.fwhm.unwrap(), a.fwhm.unwrap()) < 1e-8);
    }

    #[test]
    fn shift_equivariance(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let d = noisy_lorentzian(seed);
        let moved = Curve1D::new(d.x.iter().map(|v| v + shift).collect(), d.y.clone(), d.y_err.clone()).unwrap();
        let a = fit_lorentzian(&d).unwrap();
        let b = fit_lorentzian(&moved).unwrap();
        prop_assert!((b.param("center") - a.param("center") - shift).abs() < 1e-7);
        prop_assert!(rel(b.fwhm.unwrap(), a.fwhm.unwrap()) < 1e-7);
    }

    #[test]
    fn errors_positive_on_noisy_fits(seed in 0u64..1000) {
        let r = fit_lorentzian(&noisy_lorentzian(seed)).unwrap();
        prop_assert!(r.r_squared <= 1.0);
        for e in r.param_errors.values() {
            prop_assert!(e.is_finite() && *e > 0.0);
        }
    }
}
