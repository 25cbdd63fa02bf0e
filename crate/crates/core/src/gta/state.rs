use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Lower bound on the diagonal of `v` for exact states.
pub(crate) const DIAG_V_TOL: f64 = -1e-8;
/// Lower bound on the spectrum of `v` for exact states.
pub(crate) const EIG_V_TOL: f64 = -1e-6;
/// Euler steps push an occupation that touches zero below it by about `h`
/// (up to `1.2 h` observed, shrinking linearly with `h` on a fixed path), so
/// after a step of length `h` both bounds are lowered to `-EULER_OVERSHOOT h`.
const EULER_OVERSHOOT: f64 = 2.0;

pub(crate) fn diagonal_tolerance(h: f64) -> f64 {
    DIAG_V_TOL.min(-EULER_OVERSHOOT * h)
}

pub(crate) fn spectrum_tolerance(h: f64) -> f64 {
    EIG_V_TOL.min(-EULER_OVERSHOOT * h)
}

/// One Gaussian trajectory. `u` and `v` are dense row-major `N x N` matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub alpha: Vec<C64>,
    pub u: Vec<C64>,
    pub v: Vec<C64>,
    pub t: f64,
}

impl GaussianState {
    pub fn vacuum(n: usize) -> Self {
        Self::coherent(vec![C64::new(0.0, 0.0); n])
    }

    /// Product coherent state: central moments vanish.
    pub fn coherent(alpha: Vec<C64>) -> Self {
        let n = alpha.len();
        GaussianState {
            alpha,
            u: vec![C64::new(0.0, 0.0); n * n],
            v: vec![C64::new(0.0, 0.0); n * n],
            t: 0.0,
        }
    }

    /// Every site displaced by the same amplitude, e.g. `i` for the fully
    /// polarized relaxation start.
    pub fn polarized(n: usize, amplitude: C64) -> Self {
        Self::coherent(vec![amplitude; n])
    }

    pub fn n_sites(&self) -> usize {
        self.alpha.len()
    }

    #[inline]
    pub fn u_at(&self, i: usize, j: usize) -> C64 {
        self.u[i * self.n_sites() + j]
    }

    #[inline]
    pub fn v_at(&self, i: usize, j: usize) -> C64 {
        self.v[i * self.n_sites() + j]
    }

    /// Z2 partner `a -> -a`: displacements flip, covariances are even.
    pub fn negated(&self) -> Self {
        GaussianState {
            alpha: self.alpha.iter().map(|a| -a).collect(),
            ..self.clone()
        }
    }

    /// Exact structural checks: shapes, symmetry of `u`, Hermiticity of `v`,
    /// finiteness and the diagonal bound on `v`.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.n_sites();
        if self.u.len() != n * n || self.v.len() != n * n {
            return Err(Error::InvalidParams(format!(
                "covariance matrices must be {n}x{n}"
            )));
        }
        let finite = |z: &C64| z.re.is_finite() && z.im.is_finite();
        if !self.alpha.iter().all(finite) {
            return Err(Error::NonFinite { what: "alpha", t: self.t });
        }
        if !self.u.iter().all(finite) {
            return Err(Error::NonFinite { what: "u", t: self.t });
        }
        if !self.v.iter().all(finite) {
            return Err(Error::NonFinite { what: "v", t: self.t });
        }
        for i in 0..n {
            let d = self.v_at(i, i);
            if d.im != 0.0 || d.re < DIAG_V_TOL {
                return Err(Error::Invariant {
                    what: format!("v[{i},{i}] must be real and non-negative"),
                    t: self.t,
                    value: d.re.min(d.im.abs()),
                });
            }
            for j in i + 1..n {
                if self.u_at(i, j) != self.u_at(j, i) {
                    return Err(Error::Invariant {
                        what: format!("u not symmetric at ({i},{j})"),
                        t: self.t,
                        value: (self.u_at(i, j) - self.u_at(j, i)).norm(),
                    });
                }
                if self.v_at(i, j) != self.v_at(j, i).conj() {
                    return Err(Error::Invariant {
                        what: format!("v not Hermitian at ({i},{j})"),
                        t: self.t,
                        value: (self.v_at(i, j) - self.v_at(j, i).conj()).norm(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue of the Hermitian matrix `v`.
    pub fn min_v_eigenvalue(&self) -> f64 {
        let n = self.n_sites();
        if n == 1 {
            return self.v[0].re;
        }
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| self.v_at(i, j));
        m.symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub(crate) fn check_spectrum(&self, h: f64) -> Result<()> {
        let lo = self.min_v_eigenvalue();
        if lo < spectrum_tolerance(h) {
            return Err(Error::Invariant {
                what: "v has a negative eigenvalue".into(),
                t: self.t,
                value: lo,
            });
        }
        Ok(())
    }
}
