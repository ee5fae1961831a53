//! Adaptive Dormand–Prince 5(4) integration for small fixed-size real systems.
//!
//! The integrator is embedded-error controlled with a proportional-integral
//! step-size controller (Hairer, Nørsett & Wanner, *Solving ODEs I*, II.4).
//! There is no fixed-step mode.

use nalgebra::SVector;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on accepted + rejected steps for a single call.
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 20_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("step budget of {0} exhausted before reaching the final time")]
    StepLimit(usize),
    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state encountered at t = {0:e}")]
    NonFinite(f64),
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Integrates `y' = f(t, y)` from `t0` through each time in `outputs`
/// (ascending, all `>= t0`), returning the state at every output time.
///
/// Steps are clipped to land exactly on output times.
pub fn dopri5<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: SVector<f64, N>,
    outputs: &[f64],
    tol: &Tolerances,
    stats: &mut StepStats,
) -> Result<Vec<SVector<f64, N>>, IntegrateError>
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let mut out = Vec::with_capacity(outputs.len());
    let Some(&t_end) = outputs.last() else {
        return Ok(out);
    };

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k1, t_end - t0, tol, stats);
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0usize;

    for &t_out in outputs {
        while t < t_out {
            steps += 1;
            if steps > tol.max_steps {
                return Err(IntegrateError::StepLimit(tol.max_steps));
            }
            let last = t + h >= t_out;
            let h_try = if last { t_out - t } else { h };
            if h_try <= f64::EPSILON * t.abs().max(1e-300) {
                return Err(IntegrateError::StepUnderflow { t, h: h_try });
            }

            let k2 = f(t + C2 * h_try, &(y + k1 * (h_try * A21)));
            let k3 = f(t + C3 * h_try, &(y + (k1 * A31 + k2 * A32) * h_try));
            let k4 = f(
                t + C4 * h_try,
                &(y + (k1 * A41 + k2 * A42 + k3 * A43) * h_try),
            );
            let k5 = f(
                t + C5 * h_try,
                &(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h_try),
            );
            let k6 = f(
                t + h_try,
                &(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h_try),
            );
            let y_new = y + (k1 * A71 + k3 * A73 + k4 * A74 + k5 * A75 + k6 * A76) * h_try;
            let k7 = f(t + h_try, &y_new);
            stats.evaluations += 6;

            let err_vec = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h_try;
            let mut acc = 0.0;
            for i in 0..N {
                let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
                let r = err_vec[i] / sc;
                acc += r * r;
            }
            let err = (acc / N as f64).sqrt();
            if !err.is_finite() {
                return Err(IntegrateError::NonFinite(t));
            }

            if err <= 1.0 {
                stats.accepted += 1;
                t = if last { t_out } else { t + h_try };
                y = y_new;
                k1 = k7;
                let fac = if err == 0.0 {
                    FAC_MAX
                } else {
                    (SAFETY * err.powf(-0.2 + 0.75 * BETA) * err_prev.powf(BETA))
                        .clamp(FAC_MIN, FAC_MAX)
                };
                err_prev = err.max(1e-4);
                // A clipped final step says nothing about the natural step size.
                if !last || h_try >= h {
                    h = h_try * fac;
                }
            } else {
                stats.rejected += 1;
                let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
                h = h_try * fac;
            }
        }
        out.push(y);
    }
    Ok(out)
}

fn initial_step<const N: usize, F>(
    f: &mut F,
    t0: f64,
    y0: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    span: f64,
    tol: &Tolerances,
    stats: &mut StepStats,
) -> f64
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let scale = |v: &SVector<f64, N>| -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let sc = tol.atol + tol.rtol * y0[i].abs();
            acc += (v[i] / sc).powi(2);
        }
        (acc / N as f64).sqrt()
    };
    let d0 = scale(y0);
    let d1 = scale(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * span
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span);
    let y1 = y0 + f0 * h0;
    let f1 = f(t0 + h0, &y1);
    stats.evaluations += 1;
    let d2 = scale(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6 * span)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}
