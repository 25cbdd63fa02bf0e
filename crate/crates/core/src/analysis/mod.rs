//! Finite-size scaling: Binder cumulant, exponential and power-law fits,
//! data collapse, scans of the dynamical exponent and bootstrap errors.

mod collapse;
mod fit;
mod scan;

pub use collapse::{collapse_residual, collapse_residual_in, rescale, CollapseMode};
pub use fit::{fit_exp_decay, fit_power_law, gap_power_law, ExpFit, PowerFit, GAP_RESCALED_CUTOFF};
pub use scan::{
    binder_crossing, scan_gc_z, scan_z, scan_z_curves, BinderCrossing, CurveSamples, PointSamples, ScanOptions,
    ZScan,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Critical exponents of the 2D Ising class with a free dynamical exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalExponents {
    pub beta: f64,
    pub nu: f64,
    pub z: f64,
    pub d: f64,
}

pub const Z_RANGE: (f64, f64) = (1.5, 3.0);

impl CriticalExponents {
    pub fn ising(z: f64) -> Self {
        CriticalExponents {
            beta: 0.125,
            nu: 1.0,
            z,
            d: 2.0,
        }
    }

    pub fn with_z(self, z: f64) -> Self {
        CriticalExponents { z, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(Z_RANGE.0..=Z_RANGE.1).contains(&self.z) {
            return Err(Error::InvalidParams(format!(
                "z = {} outside [{}, {}]",
                self.z, Z_RANGE.0, Z_RANGE.1
            )));
        }
        if !(self.beta > 0.0 && self.nu > 0.0 && self.d > 0.0) {
            return Err(Error::InvalidParams("beta, nu and d must be positive".into()));
        }
        Ok(())
    }

    /// Kibble-Zurek exponent of `<abar^2> ~ v^{-x}`: `x = (d - 2 beta/nu) / (z + 1/nu)`.
    pub fn kz_exponent(&self) -> f64 {
        (self.d - 2.0 * self.beta / self.nu) / (self.z + 1.0 / self.nu)
    }
}

/// Scales of the driven-dissipative transition at the working point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalScales {
    pub g_c: f64,
    /// Microscopic velocity scale bounding the universal window from above.
    pub v_a: f64,
    /// Prefactor of `v_KZ(L) = c L^{-(z + 1/nu)}`.
    pub kz_prefactor: f64,
}

impl Default for CriticalScales {
    fn default() -> Self {
        CriticalScales {
            g_c: 0.86,
            v_a: 10.0,
            kz_prefactor: 1.0,
        }
    }
}

impl CriticalScales {
    /// Finite-size adiabaticity scale; strictly decreasing in `side`.
    pub fn v_kz(&self, side: usize, exponents: &CriticalExponents) -> f64 {
        self.kz_prefactor * (side as f64).powf(-(exponents.z + 1.0 / exponents.nu))
    }

    /// Default power-law window `[v_KZ(L), v_a]`.
    pub fn kz_window(&self, side: usize, exponents: &CriticalExponents) -> (f64, f64) {
        (self.v_kz(side, exponents), self.v_a)
    }
}

/// One lattice size's curve `y(x)` with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCurve {
    pub size: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ScalingCurve {
    pub fn new(size: usize, x: Vec<f64>, y: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() != stderr.len() {
            return Err(Error::InvalidParams("curve columns differ in length".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParams("curve x values must be strictly increasing".into()));
        }
        if stderr.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidParams("standard errors must be >= 0".into()));
        }
        Ok(ScalingCurve { size, x, y, stderr })
    }

    /// Curve without error bars.
    pub fn exact(size: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        Self::new(size, x, y, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// `U_B = 1 - <m^4> / (3 <m^2>^2)`.
pub fn binder_cumulant(moment2: f64, moment4: f64) -> Result<f64> {
    if !(moment2 > 0.0) {
        return Err(Error::Undefined(format!("Binder cumulant needs <m^2> > 0, got {moment2}")));
    }
    Ok(1.0 - moment4 / (3.0 * moment2 * moment2))
}

/// Binder cumulant of raw samples.
pub fn binder_of_samples(samples: &[f64]) -> Result<f64> {
    let n = samples.len() as f64;
    let m2 = samples.iter().map(|x| x * x).sum::<f64>() / n;
    let m4 = samples.iter().map(|x| x.powi(4)).sum::<f64>() / n;
    binder_cumulant(m2, m4)
}
