//! Decomposition of the D-transition linewidth into homogeneous, power,
//! spectral-diffusion and phononic parts, and the orbital relaxation time
//! implied by the phononic part.
//!
//! The spectral-diffusion width is measured on the C transition and assumed
//! to be the same on D; the report marks this explicitly.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::SNV_BRANCH_RATIO;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BroadeningError {
    #[error("{component} is {value:e} Hz; the subtracted components exceed the measured linewidth")]
    NegativeComponent { component: &'static str, value: f64 },
    #[error("invalid input: {0}")]
    BadInput(String),
}

/// How the lifetime is split between the two transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HomogeneousConvention {
    /// Partial decay rate over 2π: `Γ_C = w_C/(2πτ)`, `Γ_D = w_D/(2πτ)`.
    #[default]
    PartialRate,
    /// `Γ = 1/(2πτ·w)`, with `w` the transition's branching weight.
    Literal,
}

/// `(Γ_C,hom, Γ_D,hom)` in Hz.
pub fn homogeneous_linewidths(
    tau_se: f64,
    branch_ratio: f64,
    convention: HomogeneousConvention,
) -> Result<(f64, f64), BroadeningError> {
    if !(tau_se > 0.0 && tau_se.is_finite()) {
        return Err(BroadeningError::BadInput(format!("tau_se must be positive, got {tau_se}")));
    }
    if !(branch_ratio > 0.0 && branch_ratio.is_finite()) {
        return Err(BroadeningError::BadInput(format!(
            "branch ratio must be positive, got {branch_ratio}"
        )));
    }
    let w_c = branch_ratio / (1.0 + branch_ratio);
    let w_d = 1.0 / (1.0 + branch_ratio);
    let total = 1.0 / (2.0 * PI * tau_se);
    Ok(match convention {
        HomogeneousConvention::PartialRate => (w_c * total, w_d * total),
        HomogeneousConvention::Literal => (total / w_c, total / w_d),
    })
}

/// `Γ_hom (√(1 + P/P_sat) − 1)`.
pub fn power_broadening(gamma_hom: f64, p: f64, p_sat: f64) -> f64 {
    gamma_hom * ((1.0 + p / p_sat).sqrt() - 1.0)
}

/// `Γ_C,measured − Γ_C,hom − Γ_C,pow`; never clamped.
pub fn spectral_diffusion(gamma_c_measured: f64, gamma_c_hom: f64, gamma_c_pow: f64) -> Result<f64, BroadeningError> {
    let diff = gamma_c_measured - gamma_c_hom - gamma_c_pow;
    if diff < 0.0 {
        return Err(BroadeningError::NegativeComponent {
            component: "gamma_diff",
            value: diff,
        });
    }
    Ok(diff)
}

/// `(Γ_D,phon, T₋ = 1/(2πΓ_D,phon))` from the measured D linewidth and the
/// components to subtract.
pub fn phononic_remainder(
    gamma_d_measured: f64,
    gamma_d_hom: f64,
    gamma_d_pow: f64,
    gamma_diff: f64,
) -> Result<(f64, f64), BroadeningError> {
    let phon = gamma_d_measured - gamma_d_hom - gamma_d_pow - gamma_diff;
    if !(phon > 0.0) {
        return Err(BroadeningError::NegativeComponent {
            component: "gamma_d_phon",
            value: phon,
        });
    }
    Ok((phon, 1.0 / (2.0 * PI * phon)))
}

fn default_branch_ratio() -> f64 {
    SNV_BRANCH_RATIO
}

/// One-sigma uncertainties of [`BroadeningInputs`]; missing entries are zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputUncertainties {
    pub tau_se: f64,
    pub branch_ratio: f64,
    pub p_c: f64,
    pub p_d: f64,
    pub p_sat: f64,
    pub gamma_c_measured: f64,
    pub gamma_d_measured: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadeningInputs {
    /// s
    pub tau_se: f64,
    #[serde(default = "default_branch_ratio")]
    pub branch_ratio: f64,
    /// W
    pub p_c: f64,
    /// W
    pub p_d: f64,
    /// C-transition saturation power, W.
    pub p_sat: f64,
    /// Hz
    pub gamma_c_measured: f64,
    /// Hz
    pub gamma_d_measured: f64,
    #[serde(default)]
    pub convention: HomogeneousConvention,
    #[serde(default)]
    pub uncertainties: Option<InputUncertainties>,
}

impl BroadeningInputs {
    fn validate(&self) -> Result<(), BroadeningError> {
        let positive = [
            ("tau_se", self.tau_se),
            ("branch_ratio", self.branch_ratio),
            ("p_sat", self.p_sat),
            ("gamma_c_measured", self.gamma_c_measured),
            ("gamma_d_measured", self.gamma_d_measured),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BroadeningError::BadInput(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("p_c", self.p_c), ("p_d", self.p_d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(BroadeningError::BadInput(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    fn as_vector(&self) -> [f64; 7] {
        [
            self.tau_se,
            self.branch_ratio,
            self.p_c,
            self.p_d,
            self.p_sat,
            self.gamma_c_measured,
            self.gamma_d_measured,
        ]
    }

    fn with_vector(&self, v: [f64; 7]) -> Self {
        Self {
            tau_se: v[0],
            branch_ratio: v[1],
            p_c: v[2],
            p_d: v[3],
            p_sat: v[4],
            gamma_c_measured: v[5],
            gamma_d_measured: v[6],
            uncertainties: None,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadeningReport {
    pub gamma_c_hom: f64,
    pub gamma_d_hom: f64,
    pub gamma_c_pow: f64,
    pub gamma_d_pow: f64,
    pub gamma_diff: f64,
    pub gamma_d_phon: f64,
    /// s
    pub t_minus_d: f64,
    /// W; D-transition saturation power.
    pub p_sat_d: f64,
    pub convention: HomogeneousConvention,
    /// The C-transition diffusion width is applied to D unchanged.
    pub shared_diffusion_assumed: bool,
    /// First-order one-sigma uncertainties of every output, when requested.
    pub uncertainties: Option<BTreeMap<String, f64>>,
}

impl BroadeningReport {
    fn outputs(&self) -> [(&'static str, f64); 7] {
        [
            ("gamma_c_hom", self.gamma_c_hom),
            ("gamma_d_hom", self.gamma_d_hom),
            ("gamma_c_pow", self.gamma_c_pow),
            ("gamma_d_pow", self.gamma_d_pow),
            ("gamma_diff", self.gamma_diff),
            ("gamma_d_phon", self.gamma_d_phon),
            ("t_minus_d", self.t_minus_d),
        ]
    }
}

fn decompose(inputs: &BroadeningInputs) -> Result<BroadeningReport, BroadeningError> {
    let (c_hom, d_hom) = homogeneous_linewidths(inputs.tau_se, inputs.branch_ratio, inputs.convention)?;
    let p_sat_d = inputs.p_sat * inputs.branch_ratio;
    let c_pow = power_broadening(c_hom, inputs.p_c, inputs.p_sat);
    let d_pow = power_broadening(d_hom, inputs.p_d, p_sat_d);
    let diff = spectral_diffusion(inputs.gamma_c_measured, c_hom, c_pow)?;
    let (phon, t_minus_d) = phononic_remainder(inputs.gamma_d_measured, d_hom, d_pow, diff)?;
    Ok(BroadeningReport {
        gamma_c_hom: c_hom,
        gamma_d_hom: d_hom,
        gamma_c_pow: c_pow,
        gamma_d_pow: d_pow,
        gamma_diff: diff,
        gamma_d_phon: phon,
        t_minus_d,
        p_sat_d,
        convention: inputs.convention,
        shared_diffusion_assumed: true,
        uncertainties: None,
    })
}

/// Runs the whole chain; uncertainties are propagated to first order with
/// central-difference partial derivatives when `inputs.uncertainties` is set.
pub fn phononic_component(inputs: &BroadeningInputs) -> Result<BroadeningReport, BroadeningError> {
    inputs.validate()?;
    let mut report = decompose(inputs)?;
    if let Some(sig) = inputs.uncertainties {
        let sigmas = [
            sig.tau_se,
            sig.branch_ratio,
            sig.p_c,
            sig.p_d,
            sig.p_sat,
            sig.gamma_c_measured,
            sig.gamma_d_measured,
        ];
        let x = inputs.as_vector();
        let names = report.outputs().map(|(n, _)| n);
        let mut variance = [0.0; 7];
        for (i, &s) in sigmas.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let h = 1e-6 * x[i].abs().max(s);
            let mut up = x;
            let mut down = x;
            up[i] += h;
            down[i] = (down[i] - h).max(0.0);
            let hi = decompose(&inputs.with_vector(up))?.outputs();
            let lo = decompose(&inputs.with_vector(down))?.outputs();
            let width = up[i] - down[i];
            for k in 0..7 {
                let d = (hi[k].1 - lo[k].1) / width;
                variance[k] += (d * s).powi(2);
            }
        }
        report.uncertainties = Some(
            names
                .iter()
                .zip(variance)
                .map(|(n, v)| (n.to_string(), v.sqrt()))
                .collect(),
        );
    }
    Ok(report)
}
