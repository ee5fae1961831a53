//! Physical constants and unit helpers.

use std::f64::consts::PI;

/// Planck constant (J s), exact SI value.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Boltzmann constant (J/K), exact SI value.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Ground-state orbital splitting of SnV⁻ (Hz) as extracted from CPT resonances.
pub const SNV_GROUND_SPLITTING_HZ: f64 = 831e9;

/// Cryostat temperature during the CPT measurements (K).
pub const CPT_TEMPERATURE_K: f64 = 3.86;

/// C:D branching ratio from the PL peak heights.
pub const SNV_BRANCH_RATIO: f64 = 2.4;

/// Converts an ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz_to_angular(f: f64) -> f64 {
    2.0 * PI * f
}

/// Converts an angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn angular_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// `2π × value MHz` in rad/s, the unit Rabi frequencies are usually quoted in.
#[inline]
pub fn two_pi_mhz(value: f64) -> f64 {
    hz_to_angular(value * 1e6)
}
