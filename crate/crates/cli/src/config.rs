//! Run configuration read from a TOML file.
//!
//! Every key has a default, so an empty file (or no `--config` at all) is a
//! valid configuration. Unknown keys are rejected.

use std::path::Path;

use cptkit::constants::{two_pi_mhz, CPT_TEMPERATURE_K, SNV_BRANCH_RATIO, SNV_GROUND_SPLITTING_HZ};
use cptkit::cpt::{CptFitParams, CptFitSettings, OpticalDecay, SteadyStateMethod};
use cptkit::quantum::SteadyStateSettings;
use cptkit::scan::{ReductionSettings, DEFAULT_BACKGROUND, DEFAULT_MIN_RATE};
use cptkit::curvefit::SATURATION_BACKGROUND_KCPS;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for the multi-start fit; `--seed` takes precedence.
    pub seed: u64,
    pub physics: Physics,
    pub simulate: Simulate,
    pub fit: Fit,
    pub scans: Scans,
    pub thermal: Thermal,
    pub fit_line: FitLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub delta_12_hz: f64,
    pub temperature_k: f64,
    /// Excited-state lifetime.
    pub tau_se_s: f64,
    /// γ_C : γ_D
    pub branch_ratio: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            delta_12_hz: SNV_GROUND_SPLITTING_HZ,
            temperature_k: CPT_TEMPERATURE_K,
            tau_se_s: 4.55e-9,
            branch_ratio: SNV_BRANCH_RATIO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Integrate,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Simulate {
    pub omega_c_mhz: f64,
    pub omega_d_mhz: f64,
    pub t_minus_ps: f64,
    /// Ground-state pure dephasing rate, 1/s.
    pub gamma_deph: f64,
    pub grid_points: usize,
    /// Half width of the Δ_D grid; six estimated dip widths when absent.
    pub grid_half_width_hz: Option<f64>,
    pub method: Method,
}

impl Default for Simulate {
    fn default() -> Self {
        Self {
            omega_c_mhz: 22.9,
            omega_d_mhz: 306.0,
            t_minus_ps: 26.0,
            gamma_deph: 0.0,
            grid_points: 201,
            grid_half_width_hz: None,
            method: Method::Integrate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fit {
    pub guess_omega_c_mhz: f64,
    pub guess_omega_d_mhz: f64,
    pub guess_t_minus_ps: f64,
    pub starts: usize,
    pub max_evaluations_per_start: usize,
    pub min_visibility: f64,
    /// Relative change of ρ₃₃(0) that defines a parameter's uncertainty.
    pub sensitivity_fraction: f64,
    /// Relative visibility drop that defines the dephasing bound.
    pub visibility_drop: f64,
}

impl Default for Fit {
    fn default() -> Self {
        let s = CptFitSettings::default();
        Self {
            guess_omega_c_mhz: 20.0,
            guess_omega_d_mhz: 200.0,
            guess_t_minus_ps: 30.0,
            starts: s.starts,
            max_evaluations_per_start: s.max_evaluations_per_start,
            min_visibility: s.min_visibility,
            sensitivity_fraction: 0.05,
            visibility_drop: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scans {
    pub min_rate: f64,
    pub background: f64,
    /// Saturation count rate; counts are converted to population when set.
    pub f_sat: Option<f64>,
    pub reference: usize,
    pub merge_directions: bool,
}

impl Default for Scans {
    fn default() -> Self {
        Self {
            min_rate: DEFAULT_MIN_RATE,
            background: DEFAULT_BACKGROUND,
            f_sat: None,
            reference: 0,
            merge_directions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thermal {
    /// Points used by the three fits; the detected cutoff when absent.
    pub n_fit_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitLine {
    /// Fixed background of the saturation model, kcounts/s.
    pub saturation_background: f64,
    /// Weight residuals by the `y_err` column when the curve has one.
    pub use_errors: bool,
}

impl Default for FitLine {
    fn default() -> Self {
        Self {
            saturation_background: SATURATION_BACKGROUND_KCPS,
            use_errors: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn optical(&self) -> Result<OpticalDecay, CliError> {
        Ok(OpticalDecay::from_lifetime(self.physics.tau_se_s, self.physics.branch_ratio)?)
    }

    fn params(&self, oc_mhz: f64, od_mhz: f64, t_minus_ps: f64) -> CptFitParams {
        CptFitParams {
            delta_12: self.physics.delta_12_hz,
            temperature: self.physics.temperature_k,
            ..CptFitParams::snv(two_pi_mhz(oc_mhz), two_pi_mhz(od_mhz), 1e12 / t_minus_ps)
        }
    }

    pub fn simulation_params(&self) -> CptFitParams {
        let s = &self.simulate;
        CptFitParams {
            gamma_deph: s.gamma_deph,
            ..self.params(s.omega_c_mhz, s.omega_d_mhz, s.t_minus_ps)
        }
    }

    pub fn method(&self) -> SteadyStateMethod {
        match self.simulate.method {
            Method::Integrate => SteadyStateMethod::Integrate(SteadyStateSettings::default()),
            Method::Direct => SteadyStateMethod::Direct,
        }
    }

    pub fn fit_guess(&self) -> CptFitParams {
        let f = &self.fit;
        self.params(f.guess_omega_c_mhz, f.guess_omega_d_mhz, f.guess_t_minus_ps)
    }

    pub fn fit_settings(&self) -> CptFitSettings {
        CptFitSettings {
            starts: self.fit.starts,
            seed: self.seed,
            max_evaluations_per_start: self.fit.max_evaluations_per_start,
            min_visibility: self.fit.min_visibility,
            ..CptFitSettings::default()
        }
    }

    pub fn reduction(&self) -> ReductionSettings {
        let s = &self.scans;
        ReductionSettings {
            reference: s.reference,
            min_rate: s.min_rate,
            background: s.background,
            f_sat: s.f_sat,
            merge_directions: s.merge_directions,
        }
    }
}
