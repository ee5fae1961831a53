//! Coherent population trapping spectra and their three-parameter fit.
//!
//! The C laser sits on resonance (Δ_C = 0) while the D laser is scanned.
//! The free parameters are Ω_C, Ω_D and γ₋; γ₊ always follows from γ₋ by
//! detailed balance at the sample temperature, and the optical decay rates
//! come from the excited-state lifetime and the C:D branching ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{
    hz_to_angular, BOLTZMANN, CPT_TEMPERATURE_K, PLANCK,
    SNV_GROUND_SPLITTING_HZ,
};
use crate::optimize::NelderMead;
use crate::quantum::{
    evolve_to_steady_state, DensityMatrix, DriveConfig, Level, Liouvillian, QuantumError,
    SteadyStateSettings, SystemRates,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CptError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("no parameter changes the dip by more than {fraction} within three decades")]
    UnboundedSensitivity { fraction: f64 },
    #[error("model assumption violated: {0}")]
    ModelAssumptionViolated(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// `γ₊ = γ₋ · exp(−h Δ₁₂ / (k_B T))` with `delta_12` in Hz.
pub fn boltzmann_gamma_plus(gamma_minus: f64, delta_12: f64, temperature: f64) -> f64 {
    gamma_minus * boltzmann_factor(delta_12, temperature)
}

/// `exp(−h Δ₁₂ / (k_B T))`.
pub fn boltzmann_factor(delta_12: f64, temperature: f64) -> f64 {
    (-PLANCK * delta_12 / (BOLTZMANN * temperature)).exp()
}

/// Optical decay rates out of the excited level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalDecay {
    /// 3 → 1 (1/s).
    pub gamma_c: f64,
    /// 3 → 2 (1/s).
    pub gamma_d: f64,
}

impl OpticalDecay {
    /// Splits `1/τ_se` into C and D channels with `γ_C : γ_D = branch_ratio : 1`.
    pub fn from_lifetime(tau_se: f64, branch_ratio: f64) -> Result<Self, CptError> {
        if !(tau_se.is_finite() && tau_se > 0.0) || !(branch_ratio.is_finite() && branch_ratio > 0.0) {
            return Err(CptError::BadInput(format!(
                "lifetime {tau_se} s and branch ratio {branch_ratio} must be positive"
            )));
        }
        let total = 1.0 / tau_se;
        Ok(Self {
            gamma_c: total * branch_ratio / (1.0 + branch_ratio),
            gamma_d: total / (1.0 + branch_ratio),
        })
    }

    pub fn total(&self) -> f64 {
        self.gamma_c + self.gamma_d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Population,
    Fluorescence,
}

/// A CPT spectrum on a Δ_D grid (Hz, relative to the D resonance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptSpectrum {
    pub detunings_d: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SpectrumKind,
}

impl CptSpectrum {
    pub fn new(detunings_d: Vec<f64>, values: Vec<f64>, kind: SpectrumKind) -> Result<Self, CptError> {
        if detunings_d.len() != values.len() {
            return Err(CptError::BadInput("detuning and value arrays differ in length".into()));
        }
        if detunings_d.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CptError::BadInput("detunings must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(CptError::BadInput("values must be finite and non-negative".into()));
        }
        Ok(Self {
            detunings_d,
            values,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at `target` by a parabola through the grid point nearest to it
    /// and its two neighbours.
    pub fn interpolate(&self, target: f64) -> f64 {
        quadratic_at(&self.detunings_d, &self.values, target)
    }
}

pub(crate) fn quadratic_at(x: &[f64], y: &[f64], target: f64) -> f64 {
    let n = x.len();
    match n {
        0 => f64::NAN,
        1 => y[0],
        2 => {
            let t = (target - x[0]) / (x[1] - x[0]);
            y[0] + t * (y[1] - y[0])
        }
        _ => {
            let nearest = x
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let i = nearest.clamp(1, n - 2);
            let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
            let (y0, y1, y2) = (y[i - 1], y[i], y[i + 1]);
            let l0 = (target - x1) * (target - x2) / ((x0 - x1) * (x0 - x2));
            let l1 = (target - x0) * (target - x2) / ((x1 - x0) * (x1 - x2));
            let l2 = (target - x0) * (target - x1) / ((x2 - x0) * (x2 - x1));
            y0 * l0 + y1 * l1 + y2 * l2
        }
    }
}

/// Model parameters of a CPT fit. Ω in rad/s, rates in 1/s, `delta_12` in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptFitParams {
    pub omega_c: f64,
    pub omega_d: f64,
    pub gamma_minus: f64,
    pub gamma_deph: f64,
    pub delta_12: f64,
    pub temperature: f64,
}

impl CptFitParams {
    /// Parameters with the SnV⁻ defaults for Δ₁₂ and T and no dephasing.
    pub fn snv(omega_c: f64, omega_d: f64, gamma_minus: f64) -> Self {
        Self {
            omega_c,
            omega_d,
            gamma_minus,
            gamma_deph: 0.0,
            delta_12: SNV_GROUND_SPLITTING_HZ,
            temperature: CPT_TEMPERATURE_K,
        }
    }

    pub fn gamma_plus(&self) -> f64 {
        boltzmann_gamma_plus(self.gamma_minus, self.delta_12, self.temperature)
    }

    pub fn t_minus(&self) -> f64 {
        1.0 / self.gamma_minus
    }

    pub fn t_plus(&self) -> f64 {
        1.0 / self.gamma_plus()
    }

    pub fn rates(&self, optical: &OpticalDecay) -> Result<SystemRates, CptError> {
        Ok(SystemRates::thermalized(
            optical.gamma_c,
            optical.gamma_d,
            self.gamma_minus,
            self.gamma_deph,
            self.delta_12,
            self.temperature,
        )?)
    }

    pub fn get(&self, p: FitParameter) -> f64 {
        match p {
            FitParameter::OmegaC => self.omega_c,
            FitParameter::OmegaD => self.omega_d,
            FitParameter::GammaMinus => self.gamma_minus,
        }
    }

    pub fn with(mut self, p: FitParameter, value: f64) -> Self {
        match p {
            FitParameter::OmegaC => self.omega_c = value,
            FitParameter::OmegaD => self.omega_d = value,
            FitParameter::GammaMinus => self.gamma_minus = value,
        }
        self
    }

    fn validate(&self) -> Result<(), CptError> {
        let ok = [self.omega_c, self.omega_d, self.gamma_minus, self.gamma_deph]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.delta_12 > 0.0
            && self.temperature > 0.0;
        if ok {
            Ok(())
        } else {
            Err(CptError::BadInput(format!("invalid model parameters {self:?}")))
        }
    }
}

/// The three free parameters of the CPT fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitParameter {
    OmegaC,
    OmegaD,
    GammaMinus,
}

impl FitParameter {
    pub const ALL: [FitParameter; 3] = [
        FitParameter::OmegaC,
        FitParameter::OmegaD,
        FitParameter::GammaMinus,
    ];
}

/// How each steady state is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SteadyStateMethod {
    /// Time integration from `|1⟩⟨1|` with a residual check at the end.
    Integrate(SteadyStateSettings),
    /// Null space of the Liouvillian with the trace constraint.
    Direct,
}

impl Default for SteadyStateMethod {
    fn default() -> Self {
        SteadyStateMethod::Integrate(SteadyStateSettings::default())
    }
}

/// A fully specified CPT model at Δ_C = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CptModel {
    pub params: CptFitParams,
    pub optical: OpticalDecay,
    pub method: SteadyStateMethod,
}

impl CptModel {
    pub fn new(params: CptFitParams, optical: OpticalDecay, method: SteadyStateMethod) -> Self {
        Self {
            params,
            optical,
            method,
        }
    }

    /// Steady-state ρ₃₃ at D detuning `detuning_hz`.
    pub fn population(&self, detuning_hz: f64) -> Result<f64, CptError> {
        self.params.validate()?;
        let drive = DriveConfig::new(
            self.params.omega_c,
            self.params.omega_d,
            0.0,
            hz_to_angular(detuning_hz),
        )?;
        let rates = self.params.rates(&self.optical)?;
        let l = Liouvillian::from_parts(&drive, &rates);
        let rho = match self.method {
            SteadyStateMethod::Direct => l.steady_state_direct()?,
            SteadyStateMethod::Integrate(settings) => {
                evolve_to_steady_state(&DensityMatrix::ground(), &l, &settings)?.rho
            }
        };
        Ok(rho.population(Level::Excited).max(0.0))
    }

    pub fn spectrum(&self, grid_hz: &[f64]) -> Result<Vec<f64>, CptError> {
        if self.method == SteadyStateMethod::Direct {
            return self.direct_spectrum(grid_hz);
        }
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            grid_hz.par_iter().map(|&d| self.population(d)).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            grid_hz.iter().map(|&d| self.population(d)).collect()
        }
    }

    /// One generator build, then a detuning shift and a 9×9 solve per point.
    fn direct_spectrum(&self, grid_hz: &[f64]) -> Result<Vec<f64>, CptError> {
        self.params.validate()?;
        let drive = DriveConfig::new(self.params.omega_c, self.params.omega_d, 0.0, 0.0)?;
        let base = Liouvillian::from_parts(&drive, &self.params.rates(&self.optical)?);
        grid_hz
            .iter()
            .map(|&d| {
                let rho = base.shift_delta_d(hz_to_angular(d)).steady_state_direct()?;
                Ok(rho.population(Level::Excited).max(0.0))
            })
            .collect()
    }

    /// ρ₃₃ at two-photon resonance (Δ_D = Δ_C = 0).
    pub fn dip_population(&self) -> Result<f64, CptError> {
        self.population(0.0)
    }

    /// `1 − ρ₃₃(0)/ρ₃₃(tail)`.
    pub fn visibility(&self, tail_detuning_hz: f64) -> Result<f64, CptError> {
        let tail = self.population(tail_detuning_hz)?;
        if tail <= 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 - self.dip_population()? / tail)
    }
}

/// Rough dip FWHM (Hz): ground-coherence decay plus optical pumping width.
pub fn estimate_dip_fwhm_hz(params: &CptFitParams, optical: &OpticalDecay) -> f64 {
    let ground = params.gamma_minus + params.gamma_plus() + 2.0 * params.gamma_deph;
    let pumping = (params.omega_c.powi(2) + params.omega_d.powi(2)) / optical.total();
    (ground + pumping) / (2.0 * std::f64::consts::PI)
}

/// Default Δ_D grid: 201 points over ±6 estimated dip widths.
pub fn default_detuning_grid(params: &CptFitParams, optical: &OpticalDecay) -> Vec<f64> {
    let half = 6.0 * estimate_dip_fwhm_hz(params, optical);
    linspace(-half, half, 201)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Simulates ρ₃₃ over a Δ_D grid (Hz) with Δ_C = 0.
pub fn simulate_cpt_spectrum(
    params: &CptFitParams,
    optical: &OpticalDecay,
    grid_hz: &[f64],
    method: SteadyStateMethod,
) -> Result<CptSpectrum, CptError> {
    let model = CptModel::new(*params, *optical, method);
    let values = model.spectrum(grid_hz)?;
    CptSpectrum::new(grid_hz.to_vec(), values, SpectrumKind::Population)
}

/// Fit configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptFitSettings {
    /// Number of simplex starts including the user guess.
    pub starts: usize,
    pub seed: u64,
    /// Random γ₋ starts are log-uniform in this range (1/s).
    pub gamma_minus_range: (f64, f64),
    /// Random Ω starts are log-uniform within `guess / spread ..= guess × spread`.
    pub omega_spread: f64,
    pub max_evaluations_per_start: usize,
    /// Fits whose model dip visibility falls below this are treated as
    /// unidentifiable.
    pub min_visibility: f64,
}

impl Default for CptFitSettings {
    fn default() -> Self {
        Self {
            starts: 20,
            seed: 0,
            gamma_minus_range: (1.0 / 100e-12, 1.0 / 5e-12),
            omega_spread: 10.0,
            max_evaluations_per_start: 1500,
            min_visibility: 1e-3,
        }
    }
}

/// Per-parameter uncertainty from the dip-sensitivity scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSensitivity {
    pub parameter: FitParameter,
    pub value: f64,
    /// Excursion above the optimum needed to move ρ₃₃(0) by more than the fraction.
    pub up: Option<f64>,
    /// Excursion below the optimum.
    pub down: Option<f64>,
    /// `max(up, down)`; infinite when either direction never reached the fraction.
    pub uncertainty: f64,
    pub flagged: bool,
}

impl ParameterSensitivity {
    /// Uncertainty of `1/value` implied by the two excursions.
    pub fn reciprocal_uncertainty(&self) -> f64 {
        let (Some(up), Some(down)) = (self.up, self.down) else {
            return f64::INFINITY;
        };
        let t = 1.0 / self.value;
        // Raising the rate shortens the time and vice versa.
        let shorter = t - 1.0 / (self.value + up);
        let longer = 1.0 / (self.value - down) - t;
        shorter.max(longer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptFitReport {
    pub params: CptFitParams,
    pub optical: OpticalDecay,
    pub gamma_plus: f64,
    pub t_plus: f64,
    pub t_minus: f64,
    /// Filled by [`sensitivity`]; empty straight after the fit.
    pub uncertainties: Vec<ParameterSensitivity>,
    /// Sum of squared residuals.
    pub residual: f64,
    /// Model ρ₃₃ at two-photon resonance, interpolated on the data grid.
    pub dip_population: f64,
    pub visibility: f64,
    /// Largest |Δ_D| of the data grid (Hz), used as the tail reference.
    pub tail_detuning: f64,
    pub n_points: usize,
    pub evaluations: usize,
    pub initial_residual: f64,
}

impl CptFitReport {
    /// Report for fixed `params` against `spectrum`, without fitting.
    pub fn at(spectrum: &CptSpectrum, optical: &OpticalDecay, params: CptFitParams) -> Result<Self, CptError> {
        params.validate()?;
        let model = CptModel::new(params, *optical, SteadyStateMethod::Direct);
        let model_values = model.spectrum(&spectrum.detunings_d)?;
        let residual = model_values
            .iter()
            .zip(&spectrum.values)
            .map(|(m, y)| (y - m).powi(2))
            .sum();
        let dip_population = quadratic_at(&spectrum.detunings_d, &model_values, 0.0);
        let tail_detuning = spectrum
            .detunings_d
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        let visibility = model.visibility(tail_detuning)?;
        Ok(Self {
            params,
            optical: *optical,
            gamma_plus: params.gamma_plus(),
            t_plus: params.t_plus(),
            t_minus: params.t_minus(),
            uncertainties: Vec::new(),
            residual,
            dip_population,
            visibility,
            tail_detuning,
            n_points: spectrum.len(),
            evaluations: 0,
            initial_residual: residual,
        })
    }

    pub fn model(&self) -> CptModel {
        CptModel::new(self.params, self.optical, SteadyStateMethod::Direct)
    }
}

fn to_log(p: &CptFitParams) -> [f64; 3] {
    [p.omega_c.ln(), p.omega_d.ln(), p.gamma_minus.ln()]
}

fn from_log(base: &CptFitParams, u: &[f64]) -> CptFitParams {
    CptFitParams {
        omega_c: u[0].exp(),
        omega_d: u[1].exp(),
        gamma_minus: u[2].exp(),
        ..*base
    }
}

/// Sum of squared residuals between a population spectrum and the model.
pub fn cpt_residual(
    spectrum: &CptSpectrum,
    params: &CptFitParams,
    optical: &OpticalDecay,
    method: SteadyStateMethod,
) -> Result<f64, CptError> {
    let model = CptModel::new(*params, *optical, method).spectrum(&spectrum.detunings_d)?;
    Ok(model
        .iter()
        .zip(&spectrum.values)
        .map(|(m, y)| (y - m).powi(2))
        .sum())
}

/// Fits Ω_C, Ω_D and γ₋ to a population spectrum by multistart simplex.
///
/// The objective evaluates steady states with the direct Liouvillian solve.
/// `init` supplies the user guess and the fixed Δ₁₂, T and γ_d.
pub fn fit_cpt(
    spectrum: &CptSpectrum,
    optical: &OpticalDecay,
    init: &CptFitParams,
    settings: &CptFitSettings,
) -> Result<CptFitReport, CptError> {
    if spectrum.kind != SpectrumKind::Population {
        return Err(CptError::BadInput(
            "fits run in population space; convert fluorescence first".into(),
        ));
    }
    if spectrum.len() < 10 {
        return Err(CptError::BadInput(format!(
            "need at least 10 points, got {}",
            spectrum.len()
        )));
    }
    init.validate()?;
    if init.omega_c <= 0.0 || init.omega_d <= 0.0 || init.gamma_minus <= 0.0 {
        return Err(CptError::BadInput(
            "initial Ω_C, Ω_D and γ₋ must be positive".into(),
        ));
    }
    let (g_lo, g_hi) = settings.gamma_minus_range;
    if !(g_lo > 0.0 && g_hi >= g_lo) || settings.omega_spread < 1.0 {
        return Err(CptError::BadInput("invalid multistart ranges".into()));
    }

    let method = SteadyStateMethod::Direct;
    let objective = |u: &[f64]| -> f64 {
        cpt_residual(spectrum, &from_log(init, u), optical, method).unwrap_or(f64::INFINITY)
    };

    let initial_residual = objective(&to_log(init));
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut starts = vec![to_log(init)];
    let spread = settings.omega_spread.ln();
    for _ in 1..settings.starts.max(1) {
        starts.push([
            init.omega_c.ln() + rng.random_range(-spread..=spread),
            init.omega_d.ln() + rng.random_range(-spread..=spread),
            rng.random_range(g_lo.ln()..=g_hi.ln()),
        ]);
    }

    let nm = NelderMead {
        initial_step: 0.2,
        xtol: 1e-9,
        ftol_abs: 0.0,
        max_evaluations: settings.max_evaluations_per_start,
        max_restarts: 4,
    };
    let mut evaluations = 0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in &starts {
        let m = nm.minimize(objective, s);
        evaluations += m.evaluations;
        if best.as_ref().is_none_or(|b| m.value < b.1) {
            best = Some((m.x, m.value));
        }
    }
    let (mut u_best, mut f_best) = best.expect("at least one start");

    // Polish from the winner with a tight simplex.
    let polish = NelderMead {
        initial_step: 0.02,
        xtol: 1e-11,
        max_evaluations: 3000,
        ..nm
    };
    let m = polish.minimize(objective, &u_best);
    evaluations += m.evaluations;
    if m.value <= f_best {
        u_best = m.x;
        f_best = m.value;
    }

    if !f_best.is_finite() || f_best > initial_residual {
        return Err(CptError::FitDiverged(format!(
            "residual {f_best:e} did not improve on the initial {initial_residual:e}"
        )));
    }

    let mut report = CptFitReport::at(spectrum, optical, from_log(init, &u_best))?;
    if !(report.visibility >= settings.min_visibility) {
        return Err(CptError::FitDiverged(format!(
            "fitted model has no resolvable dip (visibility {:e}); γ₋ is unconstrained",
            report.visibility
        )));
    }
    report.residual = f_best;
    report.evaluations = evaluations;
    report.initial_residual = initial_residual;
    Ok(report)
}

const SENSITIVITY_STEP: f64 = 1.05;

/// Dip-sensitivity uncertainties.
///
/// Each fitted parameter is stepped by factors of 1.05 up and down from the
/// optimum until ρ₃₃ at two-photon resonance changes by more than `fraction`
/// (relative), for at most three decades. The uncertainty is the larger of
/// the two excursions; a direction that never reaches the fraction makes the
/// uncertainty infinite and flags the parameter.
pub fn sensitivity(report: &CptFitReport, fraction: f64) -> Result<Vec<ParameterSensitivity>, CptError> {
    if !(fraction.is_finite() && fraction > 0.0) {
        return Err(CptError::BadInput(format!("fraction must be positive, got {fraction}")));
    }
    let model = report.model();
    let base = model.dip_population()?;
    if base <= 0.0 {
        return Err(CptError::ModelAssumptionViolated(
            "dip population is zero; relative changes are undefined".into(),
        ));
    }
    let max_steps = (1000f64.ln() / SENSITIVITY_STEP.ln()).ceil() as i32;

    let mut out = Vec::with_capacity(3);
    for p in FitParameter::ALL {
        let value = report.params.get(p);
        let excursion = |sign: i32| -> Result<Option<f64>, CptError> {
            for k in 1..=max_steps {
                let trial = value * SENSITIVITY_STEP.powi(sign * k);
                let m = CptModel {
                    params: report.params.with(p, trial),
                    ..model
                };
                let rho = m.dip_population()?;
                if ((rho - base) / base).abs() > fraction {
                    return Ok(Some((trial - value).abs()));
                }
            }
            Ok(None)
        };
        let up = excursion(1)?;
        let down = excursion(-1)?;
        let uncertainty = match (up, down) {
            (Some(a), Some(b)) => a.max(b),
            _ => f64::INFINITY,
        };
        out.push(ParameterSensitivity {
            parameter: p,
            value,
            up,
            down,
            uncertainty,
            flagged: !uncertainty.is_finite(),
        });
    }
    if out.iter().all(|s| s.up.is_none() && s.down.is_none()) {
        return Err(CptError::UnboundedSensitivity { fraction });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DephasingBound {
    /// Smallest γ_d (1/s) that reduces the visibility by the requested drop.
    pub gamma_deph: f64,
    /// `1/γ_d` (s).
    pub time: f64,
    pub baseline_visibility: f64,
    pub iterations: usize,
}

/// Raises γ_d from zero until the dip visibility at two-photon resonance
/// drops by `visibility_drop` (relative) and returns `1/γ_d`.
///
/// The threshold rate is bracketed by doubling and refined by geometric
/// bisection to a relative width of 1e-3.
pub fn dephasing_upper_bound(report: &CptFitReport, visibility_drop: f64) -> Result<DephasingBound, CptError> {
    if !(visibility_drop > 0.0 && visibility_drop < 1.0) {
        return Err(CptError::BadInput(format!(
            "visibility drop must lie in (0, 1), got {visibility_drop}"
        )));
    }
    let base_params = CptFitParams {
        gamma_deph: 0.0,
        ..report.params
    };
    let visibility = |gd: f64| -> Result<f64, CptError> {
        CptModel::new(
            CptFitParams {
                gamma_deph: gd,
                ..base_params
            },
            report.optical,
            SteadyStateMethod::Direct,
        )
        .visibility(report.tail_detuning)
    };
    let v0 = visibility(0.0)?;
    if !(v0 > 0.0) {
        return Err(CptError::ModelAssumptionViolated(format!(
            "no dip at γ_d = 0 (visibility {v0:e})"
        )));
    }
    let target = (1.0 - visibility_drop) * v0;
    let slack = 1e-12 * v0;
    let non_monotone = |gd: f64| {
        CptError::ModelAssumptionViolated(format!(
            "visibility is not monotone in γ_d near {gd:e} 1/s"
        ))
    };

    let mut iterations = 0;
    let mut lo = 0.0;
    let mut v_lo = v0;
    let mut hi = (report.params.gamma_minus * 1e-3).max(1.0);
    let mut v_hi = visibility(hi)?;
    while v_hi > target {
        iterations += 1;
        if v_hi > v_lo + slack {
            return Err(non_monotone(hi));
        }
        if iterations > 200 {
            return Err(CptError::ModelAssumptionViolated(
                "dephasing never reduced the visibility".into(),
            ));
        }
        lo = hi;
        v_lo = v_hi;
        hi *= 2.0;
        v_hi = visibility(hi)?;
    }
    if lo == 0.0 {
        // The first probe already crossed; walk down to bracket from below.
        lo = hi;
        loop {
            iterations += 1;
            lo /= 2.0;
            let v = visibility(lo)?;
            if v > target {
                v_lo = v;
                break;
            }
            hi = lo;
            v_hi = v;
            if lo < 1e-30 {
                return Err(non_monotone(lo));
            }
        }
    }
    while hi / lo - 1.0 > 1e-3 {
        iterations += 1;
        let mid = (lo * hi).sqrt();
        let v = visibility(mid)?;
        if v > v_lo + slack || v < v_hi - slack {
            return Err(non_monotone(mid));
        }
        if v > target {
            lo = mid;
            v_lo = v;
        } else {
            hi = mid;
            v_hi = v;
        }
    }
    Ok(DephasingBound {
        gamma_deph: hi,
        time: 1.0 / hi,
        baseline_visibility: v0,
        iterations,
    })
}
