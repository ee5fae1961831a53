//! Weighted least-squares fits of spectroscopy line shapes.
//!
//! Every fit runs Levenberg–Marquardt with a central-difference Jacobian and
//! falls back to a simplex search (followed by another LM polish) when LM
//! fails to converge. Residuals are divided by `y_err` when it is present.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimize::{levenberg_marquardt, LmSettings, NelderMead};

/// Dark-count background of the saturation model (kc/s).
pub const SATURATION_BACKGROUND_KCPS: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("double-Lorentzian components coincide; single-Lorentzian fallback attached")]
    DegenerateComponents { fallback: Box<LineFitResult> },
    #[error("all y values are equal; R² is undefined")]
    ZeroVariance,
}

/// Sampled curve with optional one-sigma errors on `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve1D {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub y_err: Option<Vec<f64>>,
}

impl Curve1D {
    pub fn new(x: Vec<f64>, y: Vec<f64>, y_err: Option<Vec<f64>>) -> Result<Self, FitError> {
        if x.len() != y.len() || y_err.as_ref().is_some_and(|e| e.len() != y.len()) {
            return Err(FitError::InvalidData("array lengths differ".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FitError::InvalidData("x must be strictly increasing".into()));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(FitError::InvalidData("non-finite sample".into()));
        }
        if let Some(e) = &y_err {
            if e.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(FitError::InvalidData("y_err must be positive".into()));
            }
        }
        Ok(Self { x, y, y_err })
    }

    /// Samples `f` on `x` without errors.
    pub fn from_fn(x: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self, FitError> {
        let y = x.iter().map(|&v| f(v)).collect();
        Self::new(x, y, None)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Drops the errors so the fit runs unweighted.
    pub fn unweighted(mut self) -> Self {
        self.y_err = None;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineModel {
    Lorentzian,
    DoubleLorentzian,
    InvertedGaussian,
    Exponential,
    Saturation,
    G2,
    Linear,
    Cubic,
    CubicAnchored,
}

impl LineModel {
    pub fn parameter_names(self) -> &'static [&'static str] {
        match self {
            LineModel::Lorentzian => &["amplitude", "center", "fwhm", "background"],
            LineModel::DoubleLorentzian => &[
                "amplitude_1",
                "center_1",
                "fwhm_1",
                "amplitude_2",
                "center_2",
                "fwhm_2",
                "background",
            ],
            LineModel::InvertedGaussian => &["depth", "center", "sigma", "background"],
            LineModel::Exponential => &["amplitude", "tau", "background"],
            LineModel::Saturation => &["f_sat", "p_sat"],
            LineModel::G2 => &["p", "c", "tau_a", "tau_b", "offset"],
            LineModel::Linear | LineModel::Cubic => &["a", "b"],
            LineModel::CubicAnchored => &["a", "y0"],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LineModel::Lorentzian => "lorentzian",
            LineModel::DoubleLorentzian => "double_lorentzian",
            LineModel::InvertedGaussian => "inverted_gaussian",
            LineModel::Exponential => "exponential",
            LineModel::Saturation => "saturation",
            LineModel::G2 => "g2",
            LineModel::Linear => "linear",
            LineModel::Cubic => "cubic",
            LineModel::CubicAnchored => "cubic_anchored",
        }
    }
}

impl std::str::FromStr for LineModel {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "lorentzian" => LineModel::Lorentzian,
            "double_lorentzian" | "double-lorentzian" => LineModel::DoubleLorentzian,
            "gaussian" | "inverted_gaussian" => LineModel::InvertedGaussian,
            "exponential" | "lifetime" => LineModel::Exponential,
            "saturation" => LineModel::Saturation,
            "g2" => LineModel::G2,
            "linear" => LineModel::Linear,
            "cubic" => LineModel::Cubic,
            "cubic_anchored" | "cubic-anchored" => LineModel::CubicAnchored,
            other => return Err(FitError::InvalidData(format!("unknown model '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Simplex fallback was needed.
    SimplexFallback,
    /// A double-Lorentzian component vanished; its center and width are meaningless.
    UnconstrainedComponent(usize),
    /// The covariance matrix could not be formed.
    SingularCovariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFitResult {
    pub model: LineModel,
    pub params: BTreeMap<String, f64>,
    pub param_errors: BTreeMap<String, f64>,
    /// Row/column order given by `param_order`.
    pub covariance: Vec<Vec<f64>>,
    pub param_order: Vec<String>,
    /// FWHM in x units where the model has one.
    pub fwhm: Option<f64>,
    pub r_squared: f64,
    pub residual_sum_sq: f64,
    pub flags: Vec<FitFlag>,
    /// Extra derived quantities (e.g. `g2_zero`, `fwhm_mean`).
    pub derived: BTreeMap<String, f64>,
}

impl LineFitResult {
    /// Fitted value of `name`; panics on an unknown name.
    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn values(&self) -> Vec<f64> {
        self.param_order.iter().map(|n| self.params[n]).collect()
    }

    /// Evaluates the fitted model at `x`.
    pub fn evaluate(&self, x: f64) -> f64 {
        let p = self.values();
        match self.model {
            LineModel::Lorentzian => lorentzian(&p, x),
            LineModel::DoubleLorentzian => double_lorentzian(&p, x),
            LineModel::InvertedGaussian => inverted_gaussian(&p, x),
            LineModel::Exponential => exponential(&p, x),
            LineModel::Saturation => saturation(
                &p,
                x,
                self.derived
                    .get("background")
                    .copied()
                    .unwrap_or(SATURATION_BACKGROUND_KCPS),
            ),
            LineModel::G2 => g2(&p, x),
            LineModel::Linear => p[0] * x + p[1],
            LineModel::Cubic | LineModel::CubicAnchored => p[0] * x.powi(3) + p[1],
        }
    }
}

/// `A (Γ/2)² / ((x − x₀)² + (Γ/2)²) + bg` with `p = [A, x₀, Γ, bg]`.
pub fn lorentzian(p: &[f64], x: f64) -> f64 {
    let hw = 0.5 * p[2];
    p[0] * hw * hw / ((x - p[1]).powi(2) + hw * hw) + p[3]
}

pub fn double_lorentzian(p: &[f64], x: f64) -> f64 {
    lorentzian(&[p[0], p[1], p[2], 0.0], x) + lorentzian(&[p[3], p[4], p[5], 0.0], x) + p[6]
}

/// `bg − A exp(−(x − c)² / (2σ²))` with `p = [A, c, σ, bg]`.
pub fn inverted_gaussian(p: &[f64], x: f64) -> f64 {
    p[3] - p[0] * (-(x - p[1]).powi(2) / (2.0 * p[2] * p[2])).exp()
}

/// `A exp(−t/τ) + bg` with `p = [A, τ, bg]`.
pub fn exponential(p: &[f64], t: f64) -> f64 {
    p[0] * (-t / p[1]).exp() + p[2]
}

/// `F_sat P / (P_sat + P) + background` with `p = [F_sat, P_sat]`.
pub fn saturation(p: &[f64], power: f64, background: f64) -> f64 {
    p[0] * power / (p[1] + power) + background
}

/// `1 + p² [c e^{−|τ−o|/τ_b} − (1 + c) e^{−|τ−o|/τ_a}]` with
/// `p = [p, c, τ_a, τ_b, o]`.
pub fn g2(p: &[f64], tau: f64) -> f64 {
    let d = (tau - p[4]).abs();
    1.0 + p[0] * p[0] * (p[1] * (-d / p[3]).exp() - (1.0 + p[1]) * (-d / p[2]).exp())
}

/// `1 − SS_res / SS_tot`.
pub fn r_squared(data: &Curve1D, model_values: &[f64]) -> Result<f64, FitError> {
    r_squared_raw(&data.y, model_values)
}

pub(crate) fn r_squared_raw(y: &[f64], model_values: &[f64]) -> Result<f64, FitError> {
    if y.len() != model_values.len() {
        return Err(FitError::InvalidData(format!(
            "{} data points but {} model values",
            y.len(),
            model_values.len()
        )));
    }
    if y.is_empty() {
        return Err(FitError::ZeroVariance);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(FitError::ZeroVariance);
    }
    let ss_res: f64 = y
        .iter()
        .zip(model_values)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn x_span(data: &Curve1D) -> f64 {
    data.x[data.len() - 1] - data.x[0]
}

fn y_scale(data: &Curve1D) -> f64 {
    data.y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
}

pub(crate) struct Fitted {
    pub(crate) params: Vec<f64>,
    pub(crate) covariance: Option<DMatrix<f64>>,
    pub(crate) cost: f64,
    pub(crate) fallback: bool,
}

/// Generic LM fit with simplex fallback.
fn least_squares<F>(data: &Curve1D, model: F, p0: &[f64], scales: &[f64]) -> Result<Fitted, FitError>
where
    F: Fn(&[f64], f64) -> f64,
{
    let residuals = |p: &[f64]| -> Vec<f64> {
        match &data.y_err {
            Some(err) => data
                .x
                .iter()
                .zip(&data.y)
                .zip(err)
                .map(|((&x, &y), &s)| (model(p, x) - y) / s)
                .collect(),
            None => data
                .x
                .iter()
                .zip(&data.y)
                .map(|(&x, &y)| model(p, x) - y)
                .collect(),
        }
    };
    let settings = LmSettings::default();
    let first = levenberg_marquardt(residuals, p0, scales, &settings)
        .filter(|s| s.cost.is_finite() && s.params.iter().all(|v| v.is_finite()));

    let (solution, fallback) = match first {
        Some(s) if s.converged => (s, false),
        other => {
            // Simplex in scaled coordinates, then polish with LM.
            let start: Vec<f64> = match &other {
                Some(s) => s.params.clone(),
                None => p0.to_vec(),
            };
            let to_p = |u: &[f64]| -> Vec<f64> {
                u.iter().zip(&start).zip(scales).map(|((u, p), s)| p + u * s).collect()
            };
            let nm = NelderMead {
                initial_step: 0.1,
                xtol: 1e-12,
                max_evaluations: 20_000,
                ..NelderMead::default()
            };
            let m = nm.minimize(
                |u| residuals(&to_p(u)).iter().map(|r| r * r).sum(),
                &vec![0.0; start.len()],
            );
            let polished = levenberg_marquardt(residuals, &to_p(&m.x), scales, &settings)
                .filter(|s| s.cost.is_finite());
            match (polished, other) {
                (Some(p), _) => (p, true),
                (None, Some(o)) => (o, true),
                (None, None) => {
                    return Err(FitError::FitDiverged("no finite solution found".into()));
                }
            }
        }
    };

    let n = data.len();
    let k = p0.len();
    let jtj = solution.jacobian.transpose() * &solution.jacobian;
    let dof = n.saturating_sub(k).max(1) as f64;
    let covariance = jtj
        .try_inverse()
        .filter(|c| c.iter().all(|v| v.is_finite()))
        .map(|c| c * (solution.cost / dof));
    Ok(Fitted {
        params: solution.params,
        covariance,
        cost: solution.cost,
        fallback,
    })
}

pub(crate) fn build_result(
    data: &Curve1D,
    model: LineModel,
    fitted: Fitted,
    fwhm: Option<f64>,
    eval: impl Fn(&[f64], f64) -> f64,
) -> Result<LineFitResult, FitError> {
    let names = model.parameter_names();
    let model_values: Vec<f64> = data.x.iter().map(|&x| eval(&fitted.params, x)).collect();
    let r2 = match r_squared(data, &model_values) {
        Ok(v) => v,
        Err(FitError::ZeroVariance) => {
            if model_values.iter().zip(&data.y).all(|(a, b)| a == b) {
                1.0
            } else {
                0.0
            }
        }
        Err(e) => return Err(e),
    };
    let mut flags = Vec::new();
    if fitted.fallback {
        flags.push(FitFlag::SimplexFallback);
    }
    let k = names.len();
    let (covariance, errors): (Vec<Vec<f64>>, Vec<f64>) = match &fitted.covariance {
        Some(c) => (
            (0..k).map(|i| (0..k).map(|j| c[(i, j)]).collect()).collect(),
            (0..k).map(|i| c[(i, i)].max(0.0).sqrt()).collect(),
        ),
        None => {
            flags.push(FitFlag::SingularCovariance);
            (
                vec![vec![f64::INFINITY; k]; k],
                vec![f64::INFINITY; k],
            )
        }
    };
    Ok(LineFitResult {
        model,
        params: names
            .iter()
            .zip(&fitted.params)
            .map(|(n, v)| (n.to_string(), *v))
            .collect(),
        param_errors: names
            .iter()
            .zip(&errors)
            .map(|(n, v)| (n.to_string(), *v))
            .collect(),
        covariance,
        param_order: names.iter().map(|s| s.to_string()).collect(),
        fwhm,
        r_squared: r2,
        residual_sum_sq: fitted.cost,
        flags,
        derived: BTreeMap::new(),
    })
}

/// Runs `fit` with x measured from the middle of the range, so that line
/// centres far from zero (absolute optical frequencies) keep full precision.
fn recentered(
    data: &Curve1D,
    fit: fn(&Curve1D) -> Result<LineFitResult, FitError>,
) -> Result<LineFitResult, FitError> {
    if data.is_empty() {
        return fit(data);
    }
    let mid = 0.5 * (data.x[0] + data.x[data.len() - 1]);
    let shifted = Curve1D {
        x: data.x.iter().map(|v| v - mid).collect(),
        ..data.clone()
    };
    let shift = |r: &mut LineFitResult| {
        for (name, v) in r.params.iter_mut() {
            if name.starts_with("center") {
                *v += mid;
            }
        }
    };
    match fit(&shifted) {
        Ok(mut r) => {
            shift(&mut r);
            Ok(r)
        }
        Err(FitError::DegenerateComponents { mut fallback }) => {
            shift(&mut fallback);
            Err(FitError::DegenerateComponents { fallback })
        }
        Err(e) => Err(e),
    }
}

fn require(data: &Curve1D, need: usize) -> Result<(), FitError> {
    if data.len() < need {
        Err(FitError::TooFewPoints {
            need,
            got: data.len(),
        })
    } else {
        Ok(())
    }
}

fn edge_background(y: &[f64]) -> f64 {
    let k = (y.len() / 10).max(1);
    let mut edges: Vec<f64> = y[..k].iter().chain(&y[y.len() - k..]).copied().collect();
    edges.sort_by(|a, b| a.total_cmp(b));
    edges[edges.len() / 2]
}

/// Width of the region around `peak` where `y` stays above `level`,
/// linearly interpolated at both crossings.
fn width_at(x: &[f64], y: &[f64], peak: usize, level: f64, above: bool) -> Option<f64> {
    let inside = |v: f64| if above { v >= level } else { v <= level };
    let cross = |i: usize, j: usize| -> f64 {
        let t = (level - y[i]) / (y[j] - y[i]);
        x[i] + t * (x[j] - x[i])
    };
    let mut l = peak;
    while l > 0 && inside(y[l - 1]) {
        l -= 1;
    }
    let mut r = peak;
    while r + 1 < y.len() && inside(y[r + 1]) {
        r += 1;
    }
    let left = if l > 0 { cross(l - 1, l) } else { x[0] };
    let right = if r + 1 < y.len() { cross(r, r + 1) } else { x[x.len() - 1] };
    let w = right - left;
    (w > 0.0).then_some(w)
}

fn lorentzian_guess(x: &[f64], y: &[f64], bg: f64) -> [f64; 4] {
    let (peak, &ymax) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let amp = ymax - bg;
    let span = x[x.len() - 1] - x[0];
    let w = width_at(x, y, peak, bg + 0.5 * amp, true).unwrap_or(span / 10.0);
    [amp, x[peak], w, bg]
}

/// Fits a single Lorentzian; the FWHM is `|Γ|`.
pub fn fit_lorentzian(data: &Curve1D) -> Result<LineFitResult, FitError> {
    recentered(data, fit_lorentzian_centered)
}

fn fit_lorentzian_centered(data: &Curve1D) -> Result<LineFitResult, FitError> {
    require(data, 5)?;
    let bg = edge_background(&data.y);
    let p0 = lorentzian_guess(&data.x, &data.y, bg);
    if p0[0] <= 0.0 {
        return Err(FitError::FitDiverged("no peak above background".into()));
    }
    let ys = y_scale(data);
    let scales = [ys, x_span(data), p0[2], ys];
    let mut fitted = least_squares(data, lorentzian, &p0, &scales)?;
    fitted.params[2] = fitted.params[2].abs();
    let w = fitted.params[2];
    if !(w > 0.0 && w.is_finite()) {
        return Err(FitError::FitDiverged(format!("width collapsed to {w}")));
    }
    build_result(data, LineModel::Lorentzian, fitted, Some(w), lorentzian)
}

/// Local maxima ranked by topographic prominence, largest first.
fn prominent_peaks(y: &[f64]) -> Vec<(usize, f64)> {
    let n = y.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // Walk across plateaus.
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                let mid = (i + j) / 2;
                let mut left_min = y[i];
                let mut k = i;
                while k > 0 && y[k - 1] <= y[i] {
                    k -= 1;
                    left_min = left_min.min(y[k]);
                }
                let mut right_min = y[i];
                let mut k = j;
                while k + 1 < n && y[k + 1] <= y[i] {
                    k += 1;
                    right_min = right_min.min(y[k]);
                }
                peaks.push((mid, y[i] - left_min.max(right_min)));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks
}

/// Fits two Lorentzians on a shared background.
///
/// Components are returned ordered by center. A component whose amplitude
/// vanishes is flagged [`FitFlag::UnconstrainedComponent`]; two components
/// whose centers coincide (within 1% of the mean FWHM) yield
/// [`FitError::DegenerateComponents`] carrying a single-Lorentzian fit.
pub fn fit_double_lorentzian(data: &Curve1D) -> Result<LineFitResult, FitError> {
    recentered(data, fit_double_lorentzian_centered)
}

fn fit_double_lorentzian_centered(data: &Curve1D) -> Result<LineFitResult, FitError> {
    require(data, 9)?;
    let x = &data.x;
    let y = &data.y;
    let bg = edge_background(y);
    let span = x_span(data);
    let peaks = prominent_peaks(y);
    let Some(&(i1, _)) = peaks.first() else {
        return Err(FitError::FitDiverged("no local maximum".into()));
    };
    let amp1 = y[i1] - bg;
    let w1 = width_at(x, y, i1, bg + 0.5 * amp1, true).unwrap_or(span / 10.0);
    let (c2, a2, w2) = match peaks.get(1) {
        Some(&(i2, _)) => {
            let amp2 = y[i2] - bg;
            let w2 = width_at(x, y, i2, bg + 0.5 * amp2, true).unwrap_or(span / 10.0);
            (x[i2], amp2, w2.min(w1.max(span / 50.0)))
        }
        None => (x[i1] + 0.5 * w1, 0.5 * amp1, w1),
    };
    let p0 = [amp1, x[i1], w1, a2, c2, w2, bg];
    let ys = y_scale(data);
    let scales = [ys, span, w1, ys, span, w2, ys];
    let mut fitted = least_squares(data, double_lorentzian, &p0, &scales)?;
    fitted.params[2] = fitted.params[2].abs();
    fitted.params[5] = fitted.params[5].abs();
    if fitted.params[4] < fitted.params[1] {
        let p = &mut fitted.params;
        p.swap(0, 3);
        p.swap(1, 4);
        p.swap(2, 5);
        if let Some(c) = fitted.covariance.as_mut() {
            for (a, b) in [(0, 3), (1, 4), (2, 5)] {
                c.swap_rows(a, b);
                c.swap_columns(a, b);
            }
        }
    }
    let p = fitted.params.clone();
    let amp_max = p[0].abs().max(p[3].abs());
    let mut unconstrained = Vec::new();
    for (k, a) in [(1usize, p[0]), (2, p[3])] {
        if a.abs() < 1e-3 * amp_max {
            unconstrained.push(k);
        }
    }
    let mean_w = 0.5 * (p[2] + p[5]);
    if unconstrained.is_empty() && (p[4] - p[1]).abs() < 0.01 * mean_w {
        let fallback = fit_lorentzian_centered(data)?;
        return Err(FitError::DegenerateComponents {
            fallback: Box::new(fallback),
        });
    }
    let fwhm = match unconstrained.as_slice() {
        [1] => p[5],
        [2] => p[2],
        _ => mean_w,
    };
    let mut result = build_result(data, LineModel::DoubleLorentzian, fitted, Some(fwhm), double_lorentzian)?;
    result.derived.insert("fwhm_mean".into(), mean_w);
    result
        .flags
        .extend(unconstrained.into_iter().map(FitFlag::UnconstrainedComponent));
    Ok(result)
}

/// Fits an inverted Gaussian `bg − A exp(−(x−c)²/(2σ²))`.
pub fn fit_inverted_gaussian(data: &Curve1D) -> Result<LineFitResult, FitError> {
    recentered(data, fit_inverted_gaussian_centered)
}

fn fit_inverted_gaussian_centered(data: &Curve1D) -> Result<LineFitResult, FitError> {
    require(data, 5)?;
    let (imin, &ymin) = data
        .y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if imin == 0 || imin == data.len() - 1 {
        return Err(FitError::FitDiverged("minimum lies on the edge; no dip".into()));
    }
    let bg = edge_background(&data.y);
    let depth = bg - ymin;
    if !(depth > 0.0) {
        return Err(FitError::FitDiverged("no dip below the background".into()));
    }
    let span = x_span(data);
    let w = width_at(&data.x, &data.y, imin, bg - 0.5 * depth, false).unwrap_or(span / 10.0);
    let sigma = w / (8.0 * std::f64::consts::LN_2).sqrt();
    let p0 = [depth, data.x[imin], sigma, bg];
    let ys = y_scale(data);
    let scales = [ys, span, sigma, ys];
    let mut fitted = least_squares(data, inverted_gaussian, &p0, &scales)?;
    fitted.params[2] = fitted.params[2].abs();
    let p = &fitted.params;
    if !(p[0] > 0.0) || p[1] < data.x[0] || p[1] > data.x[data.len() - 1] {
        return Err(FitError::FitDiverged(format!(
            "fitted dip (depth {}, center {}) is not inside the data",
            p[0], p[1]
        )));
    }
    let fwhm = p[2] * (8.0 * std::f64::consts::LN_2).sqrt();
    build_result(data, LineModel::InvertedGaussian, fitted, Some(fwhm), inverted_gaussian)
}

/// Center of the dip from an inverted-Gaussian pre-fit.
pub fn fit_gaussian_prefit(data: &Curve1D) -> Result<f64, FitError> {
    Ok(fit_inverted_gaussian(data)?.param("center"))
}

/// Fits `A exp(−t/τ) + bg` and reports τ as the `tau` parameter.
pub fn fit_exponential_lifetime(data: &Curve1D) -> Result<LineFitResult, FitError> {
    require(data, 4)?;
    let y = &data.y;
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let amp = y[0] - ymin;
    let span = x_span(data);
    if !(amp > 1e-12 * y_scale(data)) {
        return Err(FitError::FitDiverged("data do not decay; τ is unbounded".into()));
    }
    let level = ymin + amp / std::f64::consts::E;
    let idx = y.iter().position(|&v| v <= level).unwrap_or(y.len() - 1);
    let tau0 = (data.x[idx] - data.x[0]).max(span / 100.0);
    let p0 = [amp, tau0, ymin];
    let ys = y_scale(data);
    let scales = [ys, tau0, ys];
    // Shift time so the amplitude refers to the first sample.
    let t0 = data.x[0];
    let model = move |p: &[f64], t: f64| exponential(p, t - t0);
    let mut fitted = least_squares(data, model, &p0, &scales)?;
    let tau = fitted.params[1];
    if !(tau.is_finite() && tau > 0.0 && tau < 1e3 * span) || fitted.params[0].abs() < 1e-9 * ys {
        return Err(FitError::FitDiverged(format!("lifetime {tau:e} is unbounded")));
    }
    // Express the amplitude at t = 0 rather than at the first sample.
    fitted.params[0] *= (t0 / tau).exp();
    if let Some(c) = fitted.covariance.as_mut() {
        let s = (t0 / tau).exp();
        for j in 0..3 {
            c[(0, j)] *= s;
            c[(j, 0)] *= s;
        }
    }
    build_result(data, LineModel::Exponential, fitted, None, exponential)
}

/// Fits `F(P) = F_sat P / (P_sat + P) + background` with a fixed background.
pub fn fit_saturation(data: &Curve1D, background: f64) -> Result<LineFitResult, FitError> {
    require(data, 3)?;
    if data.x.iter().any(|&p| p < 0.0) {
        return Err(FitError::InvalidData("powers must be non-negative".into()));
    }
    let ymax = data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pmid = data.x[data.len() / 2].max(f64::MIN_POSITIVE);
    let f0 = (2.0 * (ymax - background)).max(f64::MIN_POSITIVE);
    let p0 = [f0, pmid];
    let scales = [f0, pmid];
    let model = move |p: &[f64], x: f64| saturation(p, x, background);
    let fitted = least_squares(data, model, &p0, &scales)?;
    let (f_sat, p_sat) = (fitted.params[0], fitted.params[1]);
    if !(f_sat > 0.0 && p_sat > 0.0 && f_sat.is_finite() && p_sat.is_finite()) {
        return Err(FitError::FitDiverged(format!(
            "unphysical saturation parameters F_sat = {f_sat}, P_sat = {p_sat}"
        )));
    }
    let mut r = build_result(data, LineModel::Saturation, fitted, None, model)?;
    r.derived.insert("background".into(), background);
    Ok(r)
}

/// Fits the g² autocorrelation model; `derived["g2_zero"] = 1 − p²`.
pub fn fit_g2(data: &Curve1D) -> Result<LineFitResult, FitError> {
    require(data, 6)?;
    let x = &data.x;
    let y = &data.y;
    let span = x_span(data);
    let (imin, &ymin) = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let o = x[imin];
    let depth = (1.0 - ymin).max(0.05);
    let p = depth.sqrt();
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let c = ((ymax - 1.0).max(0.0) / (p * p)).max(0.05);
    // Antibunching recovery time from the half-recovery crossing.
    let half = ymin + 0.5 * (1.0 - ymin).max(0.0);
    let tau_a = width_at(x, y, imin, half, false)
        .map(|w| 0.5 * w / std::f64::consts::LN_2)
        .unwrap_or(span / 50.0)
        .max(span / 1e4);
    let tau_b = (10.0 * tau_a).min(span / 2.0).max(2.0 * tau_a);
    let p0 = [p, c, tau_a, tau_b, o];
    let scales = [1.0, c.max(0.1), tau_a, tau_b, tau_a];
    let mut fitted = least_squares(data, g2, &p0, &scales)?;
    fitted.params[0] = fitted.params[0].abs();
    fitted.params[2] = fitted.params[2].abs();
    fitted.params[3] = fitted.params[3].abs();
    let pp = fitted.params[0];
    let mut r = build_result(data, LineModel::G2, fitted, None, g2)?;
    r.derived.insert("g2_zero".into(), 1.0 - pp * pp);
    Ok(r)
}

/// Dispatches on `model`. The saturation fit uses the default background and
/// the anchored cubic takes its offset from a linear fit of the same data.
pub fn fit_model(model: LineModel, data: &Curve1D) -> Result<LineFitResult, FitError> {
    match model {
        LineModel::Lorentzian => fit_lorentzian(data),
        LineModel::DoubleLorentzian => fit_double_lorentzian(data),
        LineModel::InvertedGaussian => fit_inverted_gaussian(data),
        LineModel::Exponential => fit_exponential_lifetime(data),
        LineModel::Saturation => fit_saturation(data, SATURATION_BACKGROUND_KCPS),
        LineModel::G2 => fit_g2(data),
        LineModel::Linear => crate::thermal::fit_polynomial(data, crate::thermal::ModelFamily::Linear),
        LineModel::Cubic => crate::thermal::fit_polynomial(data, crate::thermal::ModelFamily::Cubic),
        LineModel::CubicAnchored => crate::thermal::fit_polynomial(
            data,
            crate::thermal::ModelFamily::CubicAnchored(crate::thermal::AnchorSource::LinearIntercept),
        ),
    }
}
