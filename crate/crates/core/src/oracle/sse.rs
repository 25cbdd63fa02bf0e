use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gta::{NoiseStream, Unraveling};
use crate::model::ModelParams;
use crate::C64;

use super::fock::FockSpace;
use super::master::build_generator;

/// Coherent state `|alpha>` truncated at `n_max` and renormalized.
pub fn coherent_ket(n_max: usize, alpha: C64) -> Vec<C64> {
    let mut ket = Vec::with_capacity(n_max + 1);
    let mut c = C64::from(1.0);
    for n in 0..=n_max {
        if n > 0 {
            c *= alpha / (n as f64).sqrt();
        }
        ket.push(c);
    }
    let norm = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ket.iter().map(|z| z / norm).collect()
}

/// Product of identical coherent states on every site of `space`.
pub(crate) fn coherent_product(space: FockSpace, alpha: C64) -> Vec<C64> {
    let local = coherent_ket(space.n_max, alpha);
    (0..space.dim())
        .map(|k| (0..space.n_sites).map(|s| local[space.occupation(k, s)]).product())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SseOptions {
    pub h: f64,
    /// Increasing times in `[0, t_end]`; the run ends at the last one.
    pub sample_times: Vec<f64>,
    #[serde(default)]
    pub unraveling: Unraveling,
}

/// Single-site moments of the conditional state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockSample {
    pub t: f64,
    /// `<a>`
    pub a: C64,
    /// `<a a>`
    pub aa: C64,
    /// `<a^dag a>`
    pub n: f64,
}

/// Largest tolerated norm drift per unit time, in units of `h`. The scheme
/// is weak order one, so each step leaves an `O(h^2)` norm defect that is
/// removed by renormalization; its signed sum grows as `O(h)` per unit time
/// (about `h` at `U = 1`, `G = 0.7`). A real instability grows far past it.
const NORM_DRIFT_PER_H: f64 = 10.0;

/// Homodyne stochastic Schrodinger equation of one site,
/// `d psi = [-iH - c^dag c/2 + <x> c/2 - <x>^2/8] psi dt + (c - <x>/2) psi dW`
/// with `c = sqrt(gamma) e^{-i theta} a` and `x = c + c^dag`. Each step
/// applies `exp(-iHh)` exactly and then the remaining terms by the
/// derivative-free (Platen) Milstein scheme. Step `k` reads noise step
/// `k` of `noise`, exactly as the Gaussian integrator does, so both see the
/// same `dW`. The norm is restored after every step; the signed sum of the
/// restorations is the norm drift and aborts the run when it grows faster
/// than `10 h` per unit time.
pub fn fock_sse_trajectory(
    params: &ModelParams,
    n_max: usize,
    initial: &[C64],
    options: &SseOptions,
    noise: &mut NoiseStream,
) -> Result<Vec<FockSample>> {
    if params.n_sites() != 1 {
        return Err(Error::InvalidParams("stochastic Fock trajectories need a single site".into()));
    }
    if noise.channels() != 1 {
        return Err(Error::InvalidParams("noise stream must have one channel".into()));
    }
    let h = options.h;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParams(format!("timestep must be positive, got {h}")));
    }
    let generator = build_generator(params, n_max, 1)?;
    let dim = n_max + 1;
    if initial.len() != dim {
        return Err(Error::InvalidParams("initial ket dimension mismatch".into()));
    }
    let mut last = 0.0;
    for &t in &options.sample_times {
        if !(t >= last) {
            return Err(Error::InvalidParams("sample times must be increasing and >= 0".into()));
        }
        last = t;
    }

    let space = generator.space;
    let a = space.annihilation(0);
    let c = &a * (C64::from_polar(params.gamma.sqrt(), -options.unraveling.quadrature_angle));
    let cd = c.adjoint();
    // Unitary part exactly, dissipative part by the stochastic scheme.
    let eig = generator.hamiltonian().clone().symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * h)));
    let unitary = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
    let damping = &cd * &c * C64::from(-0.5);

    let expect_x = |psi: &DVector<C64>, cpsi: &DVector<C64>| 2.0 * psi.dotc(cpsi).re;
    let drift = |psi: &DVector<C64>| -> DVector<C64> {
        let cpsi = &c * psi;
        let x = expect_x(psi, &cpsi);
        &damping * psi + cpsi * C64::from(0.5 * x) - psi * C64::from(0.125 * x * x)
    };
    let diffusion = |psi: &DVector<C64>| -> DVector<C64> {
        let cpsi = &c * psi;
        let x = expect_x(psi, &cpsi);
        cpsi - psi * C64::from(0.5 * x)
    };
    let moments = |psi: &DVector<C64>, t: f64| {
        let apsi = &a * psi;
        FockSample {
            t,
            a: psi.dotc(&apsi),
            aa: psi.dotc(&(&a * &apsi)),
            n: apsi.norm_squared(),
        }
    };

    let mut psi = DVector::from_column_slice(initial);
    psi /= C64::from(psi.norm());
    let sqrt_h = h.sqrt();
    let mut dw = [0.0];
    let mut step = 0u64;
    let mut defect = 0.0;
    let mut out = Vec::with_capacity(options.sample_times.len());
    for &ts in &options.sample_times {
        let target = (ts / h).round() as u64;
        while step < target {
            noise.fill(step, h, &mut dw);
            let w = dw[0];
            psi = &unitary * &psi;
            let a_psi = drift(&psi);
            let b_psi = diffusion(&psi);
            let support = &psi + &a_psi * C64::from(h) + &b_psi * C64::from(sqrt_h);
            let b_support = diffusion(&support);
            psi += a_psi * C64::from(h)
                + &b_psi * C64::from(w)
                + (b_support - b_psi) * C64::from((w * w - h) / (2.0 * sqrt_h));
            let norm = psi.norm();
            if !norm.is_finite() {
                return Err(Error::NonFinite {
                    what: "stochastic Fock state",
                    t: step as f64 * h,
                });
            }
            defect += norm * norm - 1.0;
            psi /= C64::from(norm);
            step += 1;
            let elapsed = step as f64 * h;
            if elapsed >= 1.0 && defect.abs() > NORM_DRIFT_PER_H * h * elapsed {
                return Err(Error::Invariant {
                    what: "norm drift of the stochastic Fock state".into(),
                    t: elapsed,
                    value: defect / elapsed,
                });
            }
        }
        out.push(moments(&psi, step as f64 * h));
    }
    Ok(out)
}
