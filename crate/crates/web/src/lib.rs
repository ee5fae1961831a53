//! WebAssembly bindings behind `www/index.html`.

use cptkit::broadening::{phononic_component, BroadeningInputs, HomogeneousConvention};
use cptkit::constants::two_pi_mhz;
use cptkit::cpt::{estimate_dip_fwhm_hz, linspace, CptFitParams, CptModel, OpticalDecay, SteadyStateMethod};
use cptkit::curvefit::g2;
use wasm_bindgen::prelude::*;

/// Sampled curve handed to JavaScript as two `Float64Array`s.
#[wasm_bindgen]
pub struct Curve {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[wasm_bindgen]
impl Curve {
    #[wasm_bindgen(getter)]
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn y(&self) -> Vec<f64> {
        self.y.clone()
    }
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Excited-state population against the D-laser detuning (Hz) at Δ_C = 0.
///
/// Rabi frequencies in 2π·MHz, `t_minus_ps` sets γ₋ and `gamma_deph` is in 1/s.
#[wasm_bindgen]
pub fn cpt_spectrum(
    omega_c_mhz: f64,
    omega_d_mhz: f64,
    t_minus_ps: f64,
    gamma_deph: f64,
    points: usize,
) -> Result<Curve, JsError> {
    let optical = OpticalDecay::from_lifetime(4.55e-9, 2.4).map_err(js_err)?;
    let params = CptFitParams {
        gamma_deph,
        ..CptFitParams::snv(two_pi_mhz(omega_c_mhz), two_pi_mhz(omega_d_mhz), 1e12 / t_minus_ps)
    };
    let half = 6.0 * estimate_dip_fwhm_hz(&params, &optical);
    let x = linspace(-half, half, points.clamp(3, 2001));
    // The direct solve keeps the page responsive while sliders move.
    let y = CptModel::new(params, optical, SteadyStateMethod::Direct)
        .spectrum(&x)
        .map_err(js_err)?;
    Ok(Curve { x, y })
}

/// g²(τ) over `±span_ns`, times in ns.
#[wasm_bindgen]
pub fn g2_curve(p: f64, c: f64, tau_a_ns: f64, tau_b_ns: f64, offset_ns: f64, span_ns: f64, points: usize) -> Curve {
    let x = linspace(-span_ns, span_ns, points.clamp(3, 20001));
    let params = [p, c, tau_a_ns, tau_b_ns, offset_ns];
    let y = x.iter().map(|&t| g2(&params, t)).collect();
    Curve { x, y }
}

/// D-linewidth decomposition as a JSON string. Powers in nW, widths in MHz.
#[wasm_bindgen]
pub fn d_broadening(
    tau_se_ns: f64,
    branch_ratio: f64,
    p_c_nw: f64,
    p_d_nw: f64,
    p_sat_nw: f64,
    gamma_c_mhz: f64,
    gamma_d_mhz: f64,
) -> Result<String, JsError> {
    let report = phononic_component(&BroadeningInputs {
        tau_se: tau_se_ns * 1e-9,
        branch_ratio,
        p_c: p_c_nw * 1e-9,
        p_d: p_d_nw * 1e-9,
        p_sat: p_sat_nw * 1e-9,
        gamma_c_measured: gamma_c_mhz * 1e6,
        gamma_d_measured: gamma_d_mhz * 1e6,
        convention: HomogeneousConvention::PartialRate,
        uncertainties: None,
    })
    .map_err(js_err)?;
    serde_json::to_string(&report).map_err(js_err)
}
