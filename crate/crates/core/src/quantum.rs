//! Three-level lambda system: Hamiltonian, jump operators, the Lindblad
//! right-hand side and its steady state.
//!
//! Basis order is `|1⟩` (lower ground), `|2⟩` (upper ground), `|3⟩`
//! (excited), stored at indices 0, 1, 2. All frequencies in this module are
//! angular (rad/s) and the Hamiltonian is stored as `H/ħ`.

use std::sync::OnceLock;

use nalgebra::{Matrix3, SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrate::{self, IntegrateError, StepStats, Tolerances};

pub type C64 = Complex64;
pub type Matrix3c = Matrix3<C64>;

/// Number of real parameters of a 3×3 Hermitian matrix.
pub const REAL_DIM: usize = 9;
pub type RealState = SVector<f64, REAL_DIM>;
pub type RealGenerator = SMatrix<f64, REAL_DIM, REAL_DIM>;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// Default integration horizon for steady-state evolution (s).
pub const DEFAULT_T_FINAL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("matrix is not a valid density matrix: {0}")]
    InvalidState(String),
    #[error("steady state not reached: residual {residual:e} exceeds tolerance {tolerance:e}")]
    NonConvergence { residual: f64, tolerance: f64 },
    #[error("trace drifted by {drift:e} during integration")]
    NumericalInstability { drift: f64 },
    #[error("steady state is not unique (singular Liouvillian)")]
    DegenerateSteadyState,
    #[error(transparent)]
    Integration(#[from] IntegrateError),
}

/// Levels of the lambda system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    /// `|1⟩`, the lower orbital ground level.
    LowerGround,
    /// `|2⟩`, the upper orbital ground level.
    UpperGround,
    /// `|3⟩`, the shared excited level.
    Excited,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::LowerGround, Level::UpperGround, Level::Excited];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Level::LowerGround => 0,
            Level::UpperGround => 1,
            Level::Excited => 2,
        }
    }
}

fn check_rate(name: &'static str, v: f64) -> Result<(), QuantumError> {
    if !v.is_finite() || v < 0.0 {
        return Err(QuantumError::InvalidParameter {
            name,
            reason: format!("must be finite and non-negative, got {v}"),
        });
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<(), QuantumError> {
    if !v.is_finite() || v <= 0.0 {
        return Err(QuantumError::InvalidParameter {
            name,
            reason: format!("must be finite and positive, got {v}"),
        });
    }
    Ok(())
}

/// Density matrix of the three-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Matrix3c);

impl DensityMatrix {
    /// Validates a candidate density matrix (Hermitian, unit trace, physical
    /// diagonal).
    pub fn new(m: Matrix3c) -> Result<Self, QuantumError> {
        let herm = max_abs(&(m - m.adjoint()));
        if herm > HERMITIAN_TOL {
            return Err(QuantumError::InvalidState(format!(
                "not Hermitian (max deviation {herm:e})"
            )));
        }
        let tr = m.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(QuantumError::InvalidState(format!("trace is {tr}")));
        }
        for i in 0..3 {
            let d = m[(i, i)].re;
            if !(-TRACE_TOL..=1.0 + TRACE_TOL).contains(&d) {
                return Err(QuantumError::InvalidState(format!(
                    "diagonal entry {i} = {d} out of [0, 1]"
                )));
            }
        }
        Ok(Self(m))
    }

    /// Pure state `|level⟩⟨level|`.
    pub fn pure(level: Level) -> Self {
        let mut m = Matrix3c::zeros();
        let i = level.index();
        m[(i, i)] = C64::new(1.0, 0.0);
        Self(m)
    }

    /// The initial state used for steady-state evolution, `|1⟩⟨1|`.
    pub fn ground() -> Self {
        Self::pure(Level::LowerGround)
    }

    pub fn matrix(&self) -> &Matrix3c {
        &self.0
    }

    pub fn population(&self, level: Level) -> f64 {
        let i = level.index();
        self.0[(i, i)].re
    }

    pub fn populations(&self) -> [f64; 3] {
        [self.0[(0, 0)].re, self.0[(1, 1)].re, self.0[(2, 2)].re]
    }

    pub fn coherence(&self, row: Level, col: Level) -> C64 {
        self.0[(row.index(), col.index())]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `‖ρ − ρ†‖_max`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(self.0 - self.0.adjoint()))
    }

    /// Eigenvalues of ρ in ascending order.
    pub fn eigenvalues(&self) -> [f64; 3] {
        // Hermitian by construction; symmetrise against rounding.
        let h = (self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let ev = h.symmetric_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2]];
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    pub fn to_real(&self) -> RealState {
        hermitian_to_real(&self.0)
    }

    /// Rebuilds a density matrix from its real parameters without validation.
    pub fn from_real_unchecked(x: &RealState) -> Self {
        Self(real_to_hermitian(x))
    }
}

/// Maps a Hermitian matrix to `[ρ11, ρ22, ρ33, Re ρ12, Im ρ12, Re ρ13, Im ρ13, Re ρ23, Im ρ23]`.
///
/// Anti-Hermitian parts are discarded.
pub fn hermitian_to_real(m: &Matrix3c) -> RealState {
    RealState::from([
        m[(0, 0)].re,
        m[(1, 1)].re,
        m[(2, 2)].re,
        m[(0, 1)].re,
        m[(0, 1)].im,
        m[(0, 2)].re,
        m[(0, 2)].im,
        m[(1, 2)].re,
        m[(1, 2)].im,
    ])
}

pub fn real_to_hermitian(x: &RealState) -> Matrix3c {
    let c12 = C64::new(x[3], x[4]);
    let c13 = C64::new(x[5], x[6]);
    let c23 = C64::new(x[7], x[8]);
    Matrix3c::new(
        C64::new(x[0], 0.0),
        c12,
        c13,
        c12.conj(),
        C64::new(x[1], 0.0),
        c23,
        c13.conj(),
        c23.conj(),
        C64::new(x[2], 0.0),
    )
}

fn max_abs(m: &Matrix3c) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rabi frequencies and detunings of the C and D lasers (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub omega_c: f64,
    pub omega_d: f64,
    pub delta_c: f64,
    pub delta_d: f64,
}

impl DriveConfig {
    pub fn new(omega_c: f64, omega_d: f64, delta_c: f64, delta_d: f64) -> Result<Self, QuantumError> {
        check_rate("omega_c", omega_c)?;
        check_rate("omega_d", omega_d)?;
        for (name, v) in [("delta_c", delta_c), ("delta_d", delta_d)] {
            if !v.is_finite() {
                return Err(QuantumError::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        Ok(Self {
            omega_c,
            omega_d,
            delta_c,
            delta_d,
        })
    }

    /// No light on either transition.
    pub fn off() -> Self {
        Self {
            omega_c: 0.0,
            omega_d: 0.0,
            delta_c: 0.0,
            delta_d: 0.0,
        }
    }
}

/// Incoherent rates of the lambda system.
///
/// `delta_12` is an ordinary frequency in Hz; all rates are in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemRates {
    /// Optical decay 3 → 1.
    pub gamma_c: f64,
    /// Optical decay 3 → 2.
    pub gamma_d_opt: f64,
    /// Phononic excitation 1 → 2.
    pub gamma_plus: f64,
    /// Phononic relaxation 2 → 1.
    pub gamma_minus: f64,
    /// Pure dephasing on level 2.
    pub gamma_deph: f64,
    pub delta_12: f64,
    pub temperature: f64,
}

impl SystemRates {
    pub fn new(
        gamma_c: f64,
        gamma_d_opt: f64,
        gamma_plus: f64,
        gamma_minus: f64,
        gamma_deph: f64,
        delta_12: f64,
        temperature: f64,
    ) -> Result<Self, QuantumError> {
        check_rate("gamma_c", gamma_c)?;
        check_rate("gamma_d_opt", gamma_d_opt)?;
        check_rate("gamma_plus", gamma_plus)?;
        check_rate("gamma_minus", gamma_minus)?;
        check_rate("gamma_deph", gamma_deph)?;
        check_positive("delta_12", delta_12)?;
        check_positive("temperature", temperature)?;
        Ok(Self {
            gamma_c,
            gamma_d_opt,
            gamma_plus,
            gamma_minus,
            gamma_deph,
            delta_12,
            temperature,
        })
    }

    /// Rates with `gamma_plus` tied to `gamma_minus` by detailed balance.
    pub fn thermalized(
        gamma_c: f64,
        gamma_d_opt: f64,
        gamma_minus: f64,
        gamma_deph: f64,
        delta_12: f64,
        temperature: f64,
    ) -> Result<Self, QuantumError> {
        check_rate("gamma_minus", gamma_minus)?;
        check_positive("delta_12", delta_12)?;
        check_positive("temperature", temperature)?;
        let gamma_plus = crate::cpt::boltzmann_gamma_plus(gamma_minus, delta_12, temperature);
        Self::new(
            gamma_c,
            gamma_d_opt,
            gamma_plus,
            gamma_minus,
            gamma_deph,
            delta_12,
            temperature,
        )
    }

    pub fn max_rate(&self) -> f64 {
        [
            self.gamma_c,
            self.gamma_d_opt,
            self.gamma_plus,
            self.gamma_minus,
            self.gamma_deph,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Coherent part `H/ħ` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hamiltonian(Matrix3c);

impl Hamiltonian {
    pub fn matrix(&self) -> &Matrix3c {
        &self.0
    }

    /// Largest matrix element magnitude, a proxy for the fastest coherent rate.
    pub fn max_frequency(&self) -> f64 {
        max_abs(&self.0)
    }
}

/// Builds `H/ħ = [[0, 0, Ω_C/2], [0, Δ_C−Δ_D, Ω_D/2], [Ω_C/2, Ω_D/2, Δ_C]]`.
pub fn build_hamiltonian(drive: &DriveConfig) -> Hamiltonian {
    let r = |v: f64| C64::new(v, 0.0);
    let half_c = r(drive.omega_c / 2.0);
    let half_d = r(drive.omega_d / 2.0);
    Hamiltonian(Matrix3c::new(
        r(0.0),
        r(0.0),
        half_c,
        r(0.0),
        r(drive.delta_c - drive.delta_d),
        half_d,
        half_c,
        half_d,
        r(drive.delta_c),
    ))
}

/// Incoherent channel `S_ij = √γ_ij |j⟩⟨i|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOperator {
    pub source: Level,
    pub target: Level,
    pub rate: f64,
    pub matrix: Matrix3c,
}

impl JumpOperator {
    pub fn new(source: Level, target: Level, rate: f64) -> Self {
        let mut matrix = Matrix3c::zeros();
        matrix[(target.index(), source.index())] = C64::new(rate.sqrt(), 0.0);
        Self {
            source,
            target,
            rate,
            matrix,
        }
    }
}

/// The five channels: S₁₂ (γ₊), S₂₁ (γ₋), S₃₁ (γ_C), S₃₂ (γ_D) and the
/// dephasing channel S₂₂ (γ_d). Zero-rate channels are kept as zero matrices.
pub fn build_jump_operators(rates: &SystemRates) -> Vec<JumpOperator> {
    use Level::*;
    vec![
        JumpOperator::new(LowerGround, UpperGround, rates.gamma_plus),
        JumpOperator::new(UpperGround, LowerGround, rates.gamma_minus),
        JumpOperator::new(Excited, LowerGround, rates.gamma_c),
        JumpOperator::new(Excited, UpperGround, rates.gamma_d_opt),
        JumpOperator::new(UpperGround, UpperGround, rates.gamma_deph),
    ]
}

/// `dρ/dt = −i[H, ρ] + Σ (S ρ S† − ½{S†S, ρ})`.
pub fn lindblad_rhs(rho: &Matrix3c, h: &Hamiltonian, jumps: &[JumpOperator]) -> Matrix3c {
    let i = C64::new(0.0, 1.0);
    let hm = h.matrix();
    let mut d = (hm * rho - rho * hm) * (-i);
    for s in jumps {
        if s.rate == 0.0 {
            continue;
        }
        let sm = &s.matrix;
        let sd = sm.adjoint();
        let sds = sd * sm;
        d += sm * rho * sd - (sds * rho + rho * sds) * C64::new(0.5, 0.0);
    }
    d
}

/// Real-linear form of the Lindblad generator acting on [`RealState`].
#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    generator: RealGenerator,
    max_rate: f64,
}

impl Liouvillian {
    /// Builds the 9×9 real generator column by column by applying
    /// [`lindblad_rhs`] to the Hermitian basis.
    pub fn new(h: &Hamiltonian, jumps: &[JumpOperator]) -> Self {
        let mut generator = RealGenerator::zeros();
        for k in 0..REAL_DIM {
            let mut e = RealState::zeros();
            e[k] = 1.0;
            let basis = real_to_hermitian(&e);
            let col = hermitian_to_real(&lindblad_rhs(&basis, h, jumps));
            generator.set_column(k, &col);
        }
        let max_rate = jumps
            .iter()
            .map(|s| s.rate)
            .fold(h.max_frequency() * 2.0, f64::max);
        Self {
            generator,
            max_rate,
        }
    }

    pub fn from_parts(drive: &DriveConfig, rates: &SystemRates) -> Self {
        Self::new(&build_hamiltonian(drive), &build_jump_operators(rates))
    }

    pub fn generator(&self) -> &RealGenerator {
        &self.generator
    }

    /// The same generator with Δ_D raised by `shift` (rad/s).
    ///
    /// Δ_D only enters through the energy of |2⟩, so the generator is affine
    /// in it and a spectrum needs one full build per parameter set.
    pub fn shift_delta_d(&self, shift: f64) -> Self {
        static UNIT: OnceLock<RealGenerator> = OnceLock::new();
        let unit = UNIT.get_or_init(|| {
            let drive = DriveConfig::new(0.0, 0.0, 0.0, 1.0).expect("unit detuning is valid");
            Liouvillian::new(&build_hamiltonian(&drive), &[]).generator
        });
        Self {
            generator: self.generator + unit * shift,
            max_rate: self.max_rate.max(2.0 * shift.abs()),
        }
    }

    /// Largest rate or coherent frequency entering the generator (1/s).
    pub fn max_rate(&self) -> f64 {
        self.max_rate
    }

    #[inline]
    pub fn apply(&self, x: &RealState) -> RealState {
        self.generator * x
    }

    /// Steady state from `L x = 0` with the trace constraint replacing the
    /// first population equation.
    pub fn steady_state_direct(&self) -> Result<DensityMatrix, QuantumError> {
        let mut a = self.generator;
        // Trace row scaled like the generator so pivot ratios stay meaningful.
        let scale = a.amax().max(f64::MIN_POSITIVE);
        for j in 0..REAL_DIM {
            a[(0, j)] = if j < 3 { scale } else { 0.0 };
        }
        let mut b = RealState::zeros();
        b[0] = scale;
        let lu = a.full_piv_lu();
        let u = lu.u();
        let pivots = (0..REAL_DIM).map(|i| u[(i, i)].abs());
        let largest = pivots.clone().fold(0.0, f64::max);
        let smallest = pivots.fold(f64::INFINITY, f64::min);
        if !(smallest > 1e-13 * largest) {
            return Err(QuantumError::DegenerateSteadyState);
        }
        let x = lu.solve(&b).ok_or(QuantumError::DegenerateSteadyState)?;
        Ok(DensityMatrix::from_real_unchecked(&x))
    }
}

/// Settings for [`evolve_to_steady_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSettings {
    /// Integration horizon (s).
    pub t_final: f64,
    /// Steady tolerance as a multiple of the largest rate in the problem.
    pub steady_tol_factor: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for SteadyStateSettings {
    fn default() -> Self {
        Self {
            t_final: DEFAULT_T_FINAL,
            steady_tol_factor: 1e-6,
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

impl SteadyStateSettings {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            ..Tolerances::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `‖dρ/dt‖_max` at the final time (1/s).
    pub residual: f64,
    pub tolerance: f64,
    pub stats: StepStats,
}

/// Integrates the master equation at each of `times` (ascending, > 0)
/// starting from `initial` at t = 0.
pub fn evolve(
    initial: &DensityMatrix,
    liouvillian: &Liouvillian,
    times: &[f64],
    settings: &SteadyStateSettings,
) -> Result<Vec<DensityMatrix>, QuantumError> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(QuantumError::InvalidParameter {
            name: "times",
            reason: "output times must be finite, non-negative and ascending".into(),
        });
    }
    let mut stats = StepStats::default();
    let g = liouvillian.generator();
    let xs = integrate::dopri5(
        |_, x: &RealState| g * x,
        0.0,
        initial.to_real(),
        times,
        &settings.tolerances(),
        &mut stats,
    )?;
    xs.iter()
        .map(|x| {
            let rho = DensityMatrix::from_real_unchecked(x);
            let drift = (rho.trace() - 1.0).abs();
            if drift > TRACE_DRIFT_LIMIT {
                Err(QuantumError::NumericalInstability { drift })
            } else {
                Ok(rho)
            }
        })
        .collect()
}

/// Integrates to `settings.t_final` and checks that `‖dρ/dt‖_max` there is
/// below `steady_tol_factor × max rate`.
pub fn evolve_to_steady_state(
    initial: &DensityMatrix,
    liouvillian: &Liouvillian,
    settings: &SteadyStateSettings,
) -> Result<SteadyState, QuantumError> {
    check_positive("t_final", settings.t_final)?;
    let mut stats = StepStats::default();
    let g = liouvillian.generator();
    let xs = integrate::dopri5(
        |_, x: &RealState| g * x,
        0.0,
        initial.to_real(),
        &[settings.t_final],
        &settings.tolerances(),
        &mut stats,
    )?;
    let x = xs[0];
    let rho = DensityMatrix::from_real_unchecked(&x);
    let drift = (rho.trace() - 1.0).abs();
    if drift > TRACE_DRIFT_LIMIT {
        return Err(QuantumError::NumericalInstability { drift });
    }
    let residual = max_abs(&real_to_hermitian(&liouvillian.apply(&x)));
    let tolerance = settings.steady_tol_factor * liouvillian.max_rate().max(1.0 / settings.t_final);
    if residual >= tolerance {
        return Err(QuantumError::NonConvergence {
            residual,
            tolerance,
        });
    }
    Ok(SteadyState {
        rho,
        residual,
        tolerance,
        stats,
    })
}
