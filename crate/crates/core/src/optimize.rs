//! Small dense optimizers: Nelder–Mead simplex and Levenberg–Marquardt with
//! a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex minimizer.
///
/// After convergence the simplex is rebuilt around the best vertex and the
/// search repeated until a restart no longer improves the objective; this
/// guards against the classic premature collapse of the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMead {
    /// Initial simplex edge along every coordinate.
    pub initial_step: f64,
    /// Convergence when the simplex diameter (max-norm) drops below this.
    pub xtol: f64,
    /// ... and the spread of function values drops below `ftol_abs`.
    pub ftol_abs: f64,
    pub max_evaluations: usize,
    pub max_restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            xtol: 1e-10,
            ftol_abs: 0.0,
            max_evaluations: 4000,
            max_restarts: 5,
        }
    }
}

impl NelderMead {
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut best_x = x0.to_vec();
        let mut best_f = eval(x0, &mut evals);
        let mut converged = false;
        let mut step = self.initial_step;

        for _ in 0..=self.max_restarts {
            let (x, fx, conv) = self.run(&mut eval, &best_x, best_f, step, &mut evals);
            let improved = fx < best_f;
            let moved = x
                .iter()
                .zip(&best_x)
                .any(|(a, b)| (a - b).abs() > self.xtol);
            if fx <= best_f {
                best_f = fx;
                best_x = x;
            }
            converged = conv;
            if !conv || evals >= self.max_evaluations || !(improved && moved) {
                break;
            }
            step = (step * 0.5).max(self.xtol * 100.0);
        }

        Minimum {
            x: best_x,
            value: best_f,
            evaluations: evals,
            converged,
        }
    }

    fn run<E>(
        &self,
        eval: &mut E,
        x0: &[f64],
        f0: f64,
        step: f64,
        evals: &mut usize,
    ) -> (Vec<f64>, f64, bool)
    where
        E: FnMut(&[f64], &mut usize) -> f64,
    {
        let n = x0.len();
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((x0.to_vec(), f0));
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += step;
            let fx = eval(&x, evals);
            simplex.push((x, fx));
        }

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let diameter = simplex[1..]
                .iter()
                .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            let spread = simplex[n].1 - simplex[0].1;
            if diameter <= self.xtol && spread <= self.ftol_abs.max(0.0) + f64::EPSILON * simplex[0].1.abs()
                || diameter <= self.xtol * 1e-3
            {
                return (simplex[0].0.clone(), simplex[0].1, true);
            }
            if *evals >= self.max_evaluations {
                return (simplex[0].0.clone(), simplex[0].1, false);
            }

            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, xi) in centroid.iter_mut().zip(x) {
                    *c += xi / n as f64;
                }
            }
            let worst = simplex[n].clone();
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&worst.0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };

            let xr = along(alpha);
            let fr = eval(&xr, evals);
            if fr < simplex[0].1 {
                let xe = along(gamma);
                let fe = eval(&xe, evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < worst.1 {
                let xc = along(rho * alpha);
                let fc = eval(&xc, evals);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc, evals);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
                continue;
            }
            let best = simplex[0].0.clone();
            for (x, fx) in simplex.iter_mut().skip(1) {
                for (xi, bi) in x.iter_mut().zip(&best) {
                    *xi = bi + sigma * (*xi - bi);
                }
                *fx = eval(x, evals);
            }
        }
    }
}

/// Levenberg–Marquardt settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LmSettings {
    pub max_iterations: usize,
    /// Relative reduction in the sum of squares below which iteration stops.
    pub ftol: f64,
    /// Relative parameter change below which iteration stops.
    pub xtol: f64,
    /// Infinity norm of the scaled gradient below which iteration stops.
    pub gtol: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            ftol: 1e-15,
            xtol: 1e-15,
            gtol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmSolution {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    /// Jacobian of the residual vector at `params` (rows: data, cols: params).
    pub jacobian: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Central-difference Jacobian of `residuals` at `p`.
///
/// `scales` gives the typical magnitude of each parameter and sets the
/// difference step when the parameter itself is near zero.
pub fn numerical_jacobian<F>(residuals: &mut F, p: &[f64], scales: &[f64], m: usize) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut work = p.to_vec();
    for j in 0..n {
        let h = 6e-6 * p[j].abs().max(scales[j].abs()).max(f64::MIN_POSITIVE);
        work[j] = p[j] + h;
        let rp = residuals(&work);
        work[j] = p[j] - h;
        let rm = residuals(&work);
        work[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimises `Σ r_i(p)²` starting from `p0`.
///
/// Returns `None` only if the residuals are non-finite at `p0`.
pub fn levenberg_marquardt<F>(
    mut residuals: F,
    p0: &[f64],
    scales: &[f64],
    settings: &LmSettings,
) -> Option<LmSolution>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = residuals(&p);
    let m = r.len();
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = numerical_jacobian(&mut residuals, &p, scales, m);

    while iterations < settings.max_iterations {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &rv;

        let gnorm = (0..n)
            .map(|j| {
                let col_norm = jtj[(j, j)].sqrt();
                if col_norm > 0.0 && cost > 0.0 {
                    grad[j].abs() / (col_norm * cost.sqrt())
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        if gnorm <= settings.gtol || cost == 0.0 {
            converged = true;
            break;
        }

        let mut accepted = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for j in 0..n {
                let d = jtj[(j, j)].max(1e-300);
                a[(j, j)] += lambda * d;
            }
            let rhs = -&grad;
            let Some(delta) = a.clone().cholesky().map(|c| c.solve(&rhs)).or_else(|| a.lu().solve(&rhs)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let r_trial = residuals(&trial);
            let c_trial = sum_sq(&r_trial);
            if c_trial.is_finite() && c_trial <= cost {
                let rel_f = (cost - c_trial) / cost.max(f64::MIN_POSITIVE);
                let rel_x = delta
                    .iter()
                    .zip(&p)
                    .zip(scales)
                    .map(|((d, pi), s)| d.abs() / pi.abs().max(s.abs()).max(f64::MIN_POSITIVE))
                    .fold(0.0, f64::max);
                p = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_f <= settings.ftol || rel_x <= settings.xtol {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted {
            // No descent direction left at machine precision.
            converged = true;
            break;
        }
        jac = numerical_jacobian(&mut residuals, &p, scales, m);
        if converged {
            break;
        }
    }

    Some(LmSolution {
        params: p,
        cost,
        jacobian: jac,
        residuals: r,
        iterations,
        converged,
    })
}
