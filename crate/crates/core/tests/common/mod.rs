//! Reference solutions written independently of the library's Liouvillian.
//!
//! The superoperator is assembled with Kronecker products in the
//! column-stacking convention `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)` and its null
//! vector is taken from a complex SVD.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

pub type C = Complex64;

/// Plain-number model description; angular units (rad/s) throughout.
#[derive(Debug, Clone, Copy)]
pub struct Model {
    pub omega_c: f64,
    pub omega_d: f64,
    pub delta_c: f64,
    pub delta_d: f64,
    pub gamma_c: f64,
    pub gamma_d: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub gamma_deph: f64,
}

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

fn ket_bra(i: usize, j: usize) -> Matrix3<C> {
    let mut m = Matrix3::zeros();
    m[(i, j)] = c(1.0);
    m
}

fn kron(a: &Matrix3<C>, b: &Matrix3<C>) -> DMatrix<C> {
    DMatrix::from_fn(9, 9, |r, s| a[(r / 3, s / 3)] * b[(r % 3, s % 3)])
}

pub fn superoperator(m: &Model) -> DMatrix<C> {
    let h = Matrix3::new(
        c(0.0),
        c(0.0),
        c(m.omega_c / 2.0),
        c(0.0),
        c(m.delta_c - m.delta_d),
        c(m.omega_d / 2.0),
        c(m.omega_c / 2.0),
        c(m.omega_d / 2.0),
        c(m.delta_c),
    );
    let id = Matrix3::<C>::identity();
    let i = C::new(0.0, 1.0);
    // -i(Hρ − ρH)
    let mut l = (kron(&id, &h) - kron(&h.transpose(), &id)) * (-i);
    // (source, target, rate): |target⟩⟨source|
    let channels = [
        (0, 1, m.gamma_plus),
        (1, 0, m.gamma_minus),
        (2, 0, m.gamma_c),
        (2, 1, m.gamma_d),
        (1, 1, m.gamma_deph),
    ];
    for (src, dst, rate) in channels {
        if rate == 0.0 {
            continue;
        }
        let a = ket_bra(dst, src) * c(rate.sqrt());
        let ad = a.adjoint();
        let ada = ad * a;
        l += kron(&a.conjugate(), &a);
        l -= kron(&id, &ada) * c(0.5);
        l -= kron(&ada.transpose(), &id) * c(0.5);
    }
    l
}

/// Unit-trace null vector of the superoperator, as a 3×3 matrix.
pub fn steady_state(m: &Model) -> Matrix3<C> {
    let l = superoperator(m);
    let svd = l.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap();
    let v: Vec<C> = v_t.row(k).iter().map(|z| z.conj()).collect();
    // Column stacking: vec index = col * 3 + row.
    let mut rho = Matrix3::from_fn(|r, s| v[s * 3 + r]);
    let tr = rho.trace();
    rho /= tr;
    rho
}

/// Excited-state population with the D drive off.
///
/// The 1–3 coherence relaxes at `κ = (γ_C + γ_D + γ₊)/2`; eliminating it
/// leaves rate equations with pump rate `R = Ω_C² κ / (2(κ² + Δ_C²))`:
///
/// ```text
/// 0 = R(ρ₁₁ − ρ₃₃) − (γ_C + γ_D) ρ₃₃
/// 0 = γ_D ρ₃₃ + γ₊ ρ₁₁ − γ₋ ρ₂₂
/// 1 = ρ₁₁ + ρ₂₂ + ρ₃₃
/// ```
pub fn two_level_excited_population(m: &Model) -> f64 {
    let g3 = m.gamma_c + m.gamma_d;
    let kappa = 0.5 * (g3 + m.gamma_plus);
    let r = m.omega_c * m.omega_c * kappa / (2.0 * (kappa * kappa + m.delta_c * m.delta_c));
    // From the first equation: ρ₁₁ = ρ₃₃ (R + g3)/R.
    let a = (r + g3) / r;
    // Second: ρ₂₂ = (γ_D ρ₃₃ + γ₊ a ρ₃₃)/γ₋.
    let b = (m.gamma_d + m.gamma_plus * a) / m.gamma_minus;
    1.0 / (a + b + 1.0)
}
