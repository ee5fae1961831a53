//! Phenomenological temperature models of an optical linewidth and the
//! incremental-R² cutoff between the linear and cubic regimes.
//!
//! All fits are ordinary (unweighted) least squares; the error column is
//! carried for reporting only.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curvefit::{build_result, r_squared_raw, Curve1D, FitError, Fitted, LineFitResult, LineModel};

#[derive(Debug, Error)]
pub enum ThermalError {
    #[error("{family} fit needs at least {need} points, got {got}")]
    InsufficientPoints {
        family: &'static str,
        need: usize,
        got: usize,
    },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("failed to read series: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Linewidth versus temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalSeries {
    /// K, ascending.
    pub temperatures: Vec<f64>,
    /// Hz.
    pub linewidths: Vec<f64>,
    /// Hz.
    pub linewidth_errors: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct SeriesRow {
    #[serde(rename = "temperature_K")]
    temperature_k: f64,
    #[serde(rename = "linewidth_MHz")]
    linewidth_mhz: f64,
    #[serde(rename = "error_MHz")]
    error_mhz: f64,
}

impl ThermalSeries {
    pub fn new(
        temperatures: Vec<f64>,
        linewidths: Vec<f64>,
        linewidth_errors: Vec<f64>,
    ) -> Result<Self, ThermalError> {
        if temperatures.len() != linewidths.len() || linewidths.len() != linewidth_errors.len() {
            return Err(ThermalError::InvalidSeries("column lengths differ".into()));
        }
        if temperatures.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ThermalError::InvalidSeries(
                "temperatures must be strictly ascending".into(),
            ));
        }
        if linewidths.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ThermalError::InvalidSeries("linewidths must be positive".into()));
        }
        if linewidth_errors.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(ThermalError::InvalidSeries("errors must be positive".into()));
        }
        Ok(Self {
            temperatures,
            linewidths,
            linewidth_errors,
        })
    }

    /// Reads `temperature_K,linewidth_MHz,error_MHz` rows.
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self, ThermalError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let (mut t, mut w, mut e) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let row: SeriesRow = row?;
            t.push(row.temperature_k);
            w.push(row.linewidth_mhz * 1e6);
            e.push(row.error_mhz * 1e6);
        }
        Self::new(t, w, e)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, ThermalError> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn len(&self) -> usize {
        self.temperatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.temperatures.is_empty()
    }

    fn head(&self, n: usize) -> Curve1D {
        Curve1D {
            x: self.temperatures[..n].to_vec(),
            y: self.linewidths[..n].to_vec(),
            y_err: None,
        }
    }
}

/// Where the fixed offset of the anchored cubic comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorSource {
    /// Intercept `b` of a linear fit on the same points.
    LinearIntercept,
    /// Caller-supplied offset (Hz).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// `a·T + b`
    Linear,
    /// `a·T³ + b`
    Cubic,
    /// `a·T³ + y₀`
    CubicAnchored(AnchorSource),
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Cubic => "cubic",
            ModelFamily::CubicAnchored(_) => "cubic_anchored",
        }
    }

    fn min_points(self) -> usize {
        match self {
            ModelFamily::Linear | ModelFamily::Cubic => 2,
            ModelFamily::CubicAnchored(_) => 1,
        }
    }
}

/// Ordinary least squares on `columns`, returning parameters and covariance.
fn linear_least_squares(columns: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, Option<DMatrix<f64>>, f64)> {
    let n = y.len();
    let k = columns.len();
    let a = DMatrix::from_fn(n, k, |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    // Column scaling keeps x³ columns well conditioned.
    let norms: Vec<f64> = (0..k)
        .map(|j| a.column(j).norm().max(f64::MIN_POSITIVE))
        .collect();
    let scaled = DMatrix::from_fn(n, k, |i, j| a[(i, j)] / norms[j]);
    let svd = scaled.clone().svd(true, true);
    let sol = svd.solve(&b, 1e-14).ok()?;
    let params: Vec<f64> = (0..k).map(|j| sol[j] / norms[j]).collect();
    let resid = &a * DVector::from_column_slice(&params) - &b;
    let cost = resid.norm_squared();
    let dof = n.saturating_sub(k);
    let covariance = if dof > 0 {
        (scaled.transpose() * &scaled).try_inverse().map(|inv| {
            let s2 = cost / dof as f64;
            DMatrix::from_fn(k, k, |i, j| inv[(i, j)] * s2 / (norms[i] * norms[j]))
        })
    } else {
        // Exact interpolation: zero residual, zero spread.
        Some(DMatrix::zeros(k, k))
    };
    Some((params, covariance, cost))
}

/// Fits a polynomial family to a whole curve (unweighted).
pub fn fit_polynomial(data: &Curve1D, family: ModelFamily) -> Result<LineFitResult, FitError> {
    let need = family.min_points();
    if data.len() < need {
        return Err(FitError::TooFewPoints {
            need,
            got: data.len(),
        });
    }
    let x = &data.x;
    let cube: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
    let ones = vec![1.0; x.len()];
    let singular = || FitError::FitDiverged("singular design matrix".into());
    let (model, params, covariance, cost, anchor) = match family {
        ModelFamily::Linear => {
            let (p, c, cost) = linear_least_squares(&[x.clone(), ones], &data.y).ok_or_else(singular)?;
            (LineModel::Linear, p, c, cost, None)
        }
        ModelFamily::Cubic => {
            let (p, c, cost) = linear_least_squares(&[cube, ones], &data.y).ok_or_else(singular)?;
            (LineModel::Cubic, p, c, cost, None)
        }
        ModelFamily::CubicAnchored(source) => {
            let y0 = match source {
                AnchorSource::Fixed(y0) => y0,
                AnchorSource::LinearIntercept => {
                    fit_polynomial(data, ModelFamily::Linear)?.param("b")
                }
            };
            let shifted: Vec<f64> = data.y.iter().map(|v| v - y0).collect();
            let (p, c, cost) = linear_least_squares(&[cube], &shifted).ok_or_else(singular)?;
            // y0 is fixed, so its variance is zero.
            let cov = c.map(|c| DMatrix::from_fn(2, 2, |i, j| if i == 0 && j == 0 { c[(0, 0)] } else { 0.0 }));
            (LineModel::CubicAnchored, vec![p[0], y0], cov, cost, Some(y0))
        }
    };
    let fitted = Fitted {
        params,
        covariance,
        cost,
        fallback: false,
    };
    let eval = move |p: &[f64], t: f64| match model {
        LineModel::Linear => p[0] * t + p[1],
        _ => p[0] * t.powi(3) + p[1],
    };
    let mut r = build_result(data, model, fitted, None, eval)?;
    if let Some(y0) = anchor {
        r.derived.insert("anchor".into(), y0);
    }
    Ok(r)
}

/// Fits `family` to the first `n_points` of the series.
pub fn fit_thermal_model(
    series: &ThermalSeries,
    family: ModelFamily,
    n_points: usize,
) -> Result<LineFitResult, ThermalError> {
    let need = family.min_points().max(2);
    if n_points < need || n_points > series.len() {
        return Err(ThermalError::InsufficientPoints {
            family: family.name(),
            need,
            got: n_points.min(series.len()),
        });
    }
    Ok(fit_polynomial(&series.head(n_points), family)?)
}

/// In-sample R² for `n = 3..=N`; entry `i` belongs to `n = i + 3`.
pub fn incremental_r2(series: &ThermalSeries, family: ModelFamily) -> Result<Vec<f64>, ThermalError> {
    if series.len() < 3 {
        return Err(ThermalError::InsufficientPoints {
            family: family.name(),
            need: 3,
            got: series.len(),
        });
    }
    (3..=series.len())
        .map(|n| Ok(fit_thermal_model(series, family, n)?.r_squared))
        .collect()
}

/// Out-of-sample variant: fit the first `n` points and score on all of them.
pub fn incremental_r2_out_of_sample(
    series: &ThermalSeries,
    family: ModelFamily,
) -> Result<Vec<f64>, ThermalError> {
    if series.len() < 3 {
        return Err(ThermalError::InsufficientPoints {
            family: family.name(),
            need: 3,
            got: series.len(),
        });
    }
    (3..=series.len())
        .map(|n| {
            let fit = fit_thermal_model(series, family, n)?;
            let model: Vec<f64> = series.temperatures.iter().map(|&t| fit.evaluate(t)).collect();
            Ok(r_squared_raw(&series.linewidths, &model)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Cutoff {
    Found {
        /// Index into the temperature array.
        index: usize,
        temperature: f64,
    },
    NoCutoff,
}

/// First interior local maximum (`r2[k] > r2[k−1]` and `r2[k] ≥ r2[k+1]`).
///
/// `r2_sequence[i]` is the R² after `i + 3` points, so a maximum at `i`
/// names `temperatures[i + 2]`, the last point included in that fit.
pub fn detect_cutoff(r2_sequence: &[f64], temperatures: &[f64]) -> Result<Cutoff, ThermalError> {
    if r2_sequence.len() < 3 {
        return Err(ThermalError::InsufficientPoints {
            family: "r2 sequence",
            need: 3,
            got: r2_sequence.len(),
        });
    }
    if temperatures.len() < r2_sequence.len() + 2 {
        return Err(ThermalError::InvalidSeries(format!(
            "{} temperatures cannot index {} R² values",
            temperatures.len(),
            r2_sequence.len()
        )));
    }
    for k in 1..r2_sequence.len() - 1 {
        if r2_sequence[k] > r2_sequence[k - 1] && r2_sequence[k] >= r2_sequence[k + 1] {
            return Ok(Cutoff::Found {
                index: k + 2,
                temperature: temperatures[k + 2],
            });
        }
    }
    Ok(Cutoff::NoCutoff)
}

/// `Σ |y_i − model(x_i)|` over `indices`.
pub fn total_abs_error(series: &ThermalSeries, fit: &LineFitResult, indices: impl IntoIterator<Item = usize>) -> f64 {
    indices
        .into_iter()
        .map(|i| (series.linewidths[i] - fit.evaluate(series.temperatures[i])).abs())
        .sum()
}

/// Everything the thermal analysis reports for one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalReport {
    pub n_fit_points: usize,
    pub fits: Vec<LineFitResult>,
    pub incremental_r2: Vec<(String, Vec<f64>)>,
    pub cutoff: Cutoff,
    /// `(family, error over the fitted points, error over all points)` in Hz.
    pub total_abs_error: Vec<(String, f64, f64)>,
}

/// Runs the three families, the linear-R² cutoff search, and the error table.
///
/// The fits use the first `n_fit_points` points, or the detected cutoff when
/// `None` (all points if there is no cutoff).
pub fn analyze(series: &ThermalSeries, n_fit_points: Option<usize>) -> Result<ThermalReport, ThermalError> {
    let families = [
        ModelFamily::Linear,
        ModelFamily::Cubic,
        ModelFamily::CubicAnchored(AnchorSource::LinearIntercept),
    ];
    let mut incremental = Vec::new();
    for f in families {
        incremental.push((f.name().to_string(), incremental_r2(series, f)?));
    }
    let cutoff = detect_cutoff(&incremental[0].1, &series.temperatures)?;
    let n = n_fit_points.unwrap_or(match cutoff {
        Cutoff::Found { index, .. } => index + 1,
        Cutoff::NoCutoff => series.len(),
    });
    let mut fits = Vec::new();
    let mut errors = Vec::new();
    for f in families {
        let fit = fit_thermal_model(series, f, n)?;
        errors.push((
            f.name().to_string(),
            total_abs_error(series, &fit, 0..n),
            total_abs_error(series, &fit, 0..series.len()),
        ));
        fits.push(fit);
    }
    Ok(ThermalReport {
        n_fit_points: n,
        fits,
        incremental_r2: incremental,
        cutoff,
        total_abs_error: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn series(t: &[f64], f: impl Fn(f64) -> f64) -> ThermalSeries {
        ThermalSeries::new(t.to_vec(), t.iter().map(|&x| f(x)).collect(), vec![1e6; t.len()]).unwrap()
    }

    #[test]
    fn two_points_interpolate_exactly() {
        let s = series(&[4.0, 6.0], |t| 1e8 + 2e7 * t);
        let r = fit_thermal_model(&s, ModelFamily::Linear, 2).unwrap();
        assert_relative_eq!(r.param("a"), 2e7, max_relative = 1e-12);
        assert_relative_eq!(r.param("b"), 1e8, max_relative = 1e-12);
        assert_relative_eq!(r.r_squared, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn anchored_cubic_recovers_a() {
        let t: Vec<f64> = (0..10).map(|i| 4.0 + i as f64).collect();
        let s = series(&t, |x| 3e5 * x.powi(3) + 2e8);
        let r = fit_thermal_model(&s, ModelFamily::CubicAnchored(AnchorSource::Fixed(2e8)), 10).unwrap();
        assert_relative_eq!(r.param("a"), 3e5, max_relative = 1e-6);
        assert_eq!(r.param_errors["y0"], 0.0);
    }

    #[test]
    fn anchor_defaults_to_linear_intercept() {
        let t: Vec<f64> = (0..6).map(|i| 4.0 + 2.0 * i as f64).collect();
        let s = series(&t, |x| 1e7 * x + 5e7 + 1e5 * x * x);
        let lin = fit_thermal_model(&s, ModelFamily::Linear, 6).unwrap();
        let anch = fit_thermal_model(&s, ModelFamily::CubicAnchored(AnchorSource::LinearIntercept), 6).unwrap();
        assert_eq!(anch.param("y0"), lin.param("b"));
    }

    #[test]
    fn insufficient_points() {
        let s = series(&[4.0, 5.0, 6.0], |t| t);
        assert!(matches!(
            fit_thermal_model(&s, ModelFamily::Linear, 1),
            Err(ThermalError::InsufficientPoints { .. })
        ));
        assert!(matches!(
            fit_thermal_model(&s, ModelFamily::Cubic, 4),
            Err(ThermalError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn cutoff_rules() {
        let t: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(detect_cutoff(&[0.1, 0.2, 0.3, 0.4], &t).unwrap(), Cutoff::NoCutoff);
        // Plateau: the earlier index wins.
        assert_eq!(
            detect_cutoff(&[0.5, 0.9, 0.9, 0.4], &t).unwrap(),
            Cutoff::Found { index: 3, temperature: 3.0 }
        );
        assert!(detect_cutoff(&[0.5, 0.9], &t).is_err());
    }

    #[test]
    fn abs_error_of_offset() {
        let t = [4.0, 5.0, 6.0, 7.0];
        let s = series(&t, |x| 1e7 * x + 1e8);
        let fit = fit_thermal_model(&s, ModelFamily::Linear, 4).unwrap();
        assert!(total_abs_error(&s, &fit, 0..4) < 1e-6);
        let shifted = series(&t, |x| 1e7 * x + 1e8 + 3e6);
        assert_relative_eq!(total_abs_error(&shifted, &fit, 0..4), 4.0 * 3e6, max_relative = 1e-9);
    }

    #[test]
    fn reads_csv() {
        let text = "temperature_K,linewidth_MHz,error_MHz\n4,400,10\n6,450,12\n";
        let s = ThermalSeries::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(s.temperatures, vec![4.0, 6.0]);
        assert_eq!(s.linewidths, vec![400e6, 450e6]);
        assert_eq!(s.linewidth_errors, vec![10e6, 12e6]);
    }
}
