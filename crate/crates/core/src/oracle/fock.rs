use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

/// Product Fock basis of `n_sites` modes truncated at `n_max` photons each.
/// Basis index `n_1 (n_max+1) + n_2` for two sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    pub n_max: usize,
    pub n_sites: usize,
}

impl FockSpace {
    pub fn new(n_max: usize, n_sites: usize) -> Result<Self> {
        if !(1..=2).contains(&n_sites) {
            return Err(Error::InvalidParams(format!(
                "Fock oracle supports 1 or 2 sites, got {n_sites}"
            )));
        }
        if n_max < 4 {
            return Err(Error::InvalidParams(format!("photon cutoff must be >= 4, got {n_max}")));
        }
        Ok(FockSpace { n_max, n_sites })
    }

    pub fn local_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.local_dim().pow(self.n_sites as u32)
    }

    /// Photon number of `site` in basis state `index`.
    pub fn occupation(&self, index: usize, site: usize) -> usize {
        let d = self.local_dim();
        let shift = self.n_sites - 1 - site;
        (index / d.pow(shift as u32)) % d
    }

    /// Annihilation operator on `site` as a dense matrix.
    pub fn annihilation(&self, site: usize) -> DMatrix<C64> {
        let dim = self.dim();
        let stride = self.local_dim().pow((self.n_sites - 1 - site) as u32);
        let mut a = DMatrix::zeros(dim, dim);
        for col in 0..dim {
            let n = self.occupation(col, site);
            if n > 0 {
                a[(col - stride, col)] = C64::new((n as f64).sqrt(), 0.0);
            }
        }
        a
    }

    /// Photon-number parity `(-1)^{sum n_j}` as a diagonal of signs.
    pub fn parity(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                let total: usize = (0..self.n_sites).map(|s| self.occupation(k, s)).sum();
                if total % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect()
    }
}

/// Largest entry modulus.
pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Density matrix on a [`FockSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    pub space: FockSpace,
    pub rho: DMatrix<C64>,
}

impl FockDensityMatrix {
    pub fn vacuum(space: FockSpace) -> Self {
        let mut rho = DMatrix::zeros(space.dim(), space.dim());
        rho[(0, 0)] = C64::new(1.0, 0.0);
        FockDensityMatrix { space, rho }
    }

    pub fn pure(space: FockSpace, ket: &[C64]) -> Result<Self> {
        if ket.len() != space.dim() {
            return Err(Error::InvalidParams("ket dimension mismatch".into()));
        }
        let norm: f64 = ket.iter().map(|c| c.norm_sqr()).sum();
        let rho = DMatrix::from_fn(space.dim(), space.dim(), |i, j| ket[i] * ket[j].conj() / norm);
        Ok(FockDensityMatrix { space, rho })
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    pub fn expect(&self, op: &DMatrix<C64>) -> C64 {
        (op * &self.rho).trace()
    }

    pub fn mean_a(&self, site: usize) -> C64 {
        self.expect(&self.space.annihilation(site))
    }

    pub fn occupation(&self, site: usize) -> f64 {
        let a = self.space.annihilation(site);
        self.expect(&(a.adjoint() * a)).re
    }

    /// Population of Fock level `n` on `site`.
    pub fn level_population(&self, site: usize, n: usize) -> f64 {
        (0..self.space.dim())
            .filter(|&k| self.space.occupation(k, site) == n)
            .map(|k| self.rho[(k, k)].re)
            .sum()
    }

    /// Trace, Hermiticity, positivity and cutoff adequacy.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |what: &str, value: f64| Error::Invariant {
            what: what.to_string(),
            t: f64::NAN,
            value,
        };
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-10 {
            return Err(bad("trace differs from one", (tr - 1.0).norm()));
        }
        let herm = max_abs(&(&self.rho - self.rho.adjoint()));
        if herm > 1e-10 {
            return Err(bad("density matrix not Hermitian", herm));
        }
        let sym = (&self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        let lo = sym.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        if lo < -1e-9 {
            return Err(bad("negative eigenvalue", lo));
        }
        for site in 0..self.space.n_sites {
            let top = self.level_population(site, self.space.n_max)
                + self.level_population(site, self.space.n_max - 1);
            if top >= 1e-8 {
                return Err(bad("photon cutoff too small: top levels populated", top));
            }
        }
        Ok(())
    }
}
