use crate::C64;

use super::GaussianState;

/// Magnetisation-like order parameter `Im (1/N) sum_i alpha_i`.
pub fn order_parameter(state: &GaussianState) -> f64 {
    let n = state.n_sites() as f64;
    state.alpha.iter().map(|a| a.im).sum::<f64>() / n
}

/// Occupation of the uniform mode, `(1/N) sum_ij (v_ij + alpha_i^* alpha_j)`.
pub fn mode_occupation_k0(state: &GaussianState) -> f64 {
    let n = state.n_sites() as f64;
    let total: C64 = state.alpha.iter().sum();
    let fluct: f64 = state.v.iter().map(|z| z.re).sum();
    (fluct + total.norm_sqr()) / n
}

/// `sign(Im alpha_i)` on every site, `+1` for zero.
pub fn sign_field(state: &GaussianState) -> Vec<i8> {
    state
        .alpha
        .iter()
        .map(|a| if a.im < 0.0 { -1 } else { 1 })
        .collect()
}
