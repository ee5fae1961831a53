//! Simulation and fitting toolkit for coherent population trapping (CPT) in
//! three-level lambda systems.
//!
//! The crate is organised around the analysis chain used for orbital CPT on
//! group-IV colour centres:
//!
//! * [`quantum`]: Lindblad master equation for the lambda system, adaptive
//!   time integration and a direct steady-state solve.
//! * [`cpt`]: CPT spectra, the three-parameter dip fit under the Boltzmann
//!   constraint, sensitivity uncertainties and the dephasing bound.
//! * [`curvefit`]: line-shape fits (Lorentzian, Gaussian, lifetime,
//!   saturation, g²).
//! * [`thermal`]: linear / cubic linewidth models and the R² cutoff search.
//! * [`scan`]: raw scan reduction to fit-ready spectra.
//! * [`broadening`]: decomposition of an optical linewidth into its
//!   homogeneous, power, spectral-diffusion and phononic parts.

pub mod broadening;
pub mod constants;
pub mod cpt;
pub mod curvefit;
pub mod integrate;
pub mod optimize;
pub mod quantum;
pub mod scan;
pub mod thermal;

pub use cpt::{CptFitParams, CptFitReport, CptSpectrum, SpectrumKind};
pub use quantum::{DensityMatrix, DriveConfig, Hamiltonian, JumpOperator, SystemRates};
