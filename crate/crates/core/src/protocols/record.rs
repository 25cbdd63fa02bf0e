use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gta::Sample;

/// Ensemble statistics of the order parameter at fixed sample times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub times: Vec<f64>,
    /// `<abar>`
    pub mean: Vec<f64>,
    /// `<abar^2>`
    pub m2: Vec<f64>,
    /// `<abar^4>`
    pub m4: Vec<f64>,
    /// `<n_{k=0}>`
    pub nk0: Vec<f64>,
    pub stderr_mean: Vec<f64>,
    pub stderr_m2: Vec<f64>,
    pub n_traj: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// Mean and standard error of the mean, summed in index order.
pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl EnsembleRecord {
    /// Reduces per-trajectory sample series, ordered by trajectory index, to
    /// ensemble moments. Every series must share the sample times.
    pub fn from_samples(per_traj: &[Vec<Sample>], seed: u64, config_hash: &str) -> Result<Self> {
        let Some(first) = per_traj.first() else {
            return Err(Error::InvalidParams("ensemble is empty".into()));
        };
        let n_times = first.len();
        if per_traj.iter().any(|s| s.len() != n_times) {
            return Err(Error::InvalidParams("trajectories have different sample counts".into()));
        }
        let n = per_traj.len();
        let mut rec = EnsembleRecord {
            times: first.iter().map(|s| s.t).collect(),
            mean: Vec::with_capacity(n_times),
            m2: Vec::with_capacity(n_times),
            m4: Vec::with_capacity(n_times),
            nk0: Vec::with_capacity(n_times),
            stderr_mean: Vec::with_capacity(n_times),
            stderr_m2: Vec::with_capacity(n_times),
            n_traj: n,
            seed,
            config_hash: config_hash.to_string(),
        };
        let mut xs = vec![0.0; n];
        let mut x2 = vec![0.0; n];
        for k in 0..n_times {
            for (s, (x, y)) in per_traj.iter().zip(xs.iter_mut().zip(x2.iter_mut())) {
                *x = s[k].order;
                *y = s[k].order * s[k].order;
            }
            let (m, se) = mean_stderr(&xs);
            let (m2, se2) = mean_stderr(&x2);
            rec.mean.push(m);
            rec.stderr_mean.push(se);
            rec.m2.push(m2);
            rec.stderr_m2.push(se2);
            rec.m4.push(x2.iter().map(|y| y * y).sum::<f64>() / n as f64);
            rec.nk0.push(per_traj.iter().map(|s| s[k].nk0).sum::<f64>() / n as f64);
        }
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_m2(&self) -> Option<(f64, f64)> {
        Some((*self.m2.last()?, *self.stderr_m2.last()?))
    }

    /// `<abar^2> >= 0`, `<abar^4> >= <abar^2>^2` (up to rounding) and
    /// non-negative standard errors at every sample.
    pub fn check_invariants(&self) -> Result<()> {
        for k in 0..self.len() {
            let (m2, m4) = (self.m2[k], self.m4[k]);
            let bad = |what: &str, value: f64| Error::Invariant {
                what: what.to_string(),
                t: self.times[k],
                value,
            };
            if !(m2 >= 0.0) {
                return Err(bad("second moment negative", m2));
            }
            if !(m4 >= m2 * m2 * (1.0 - 1e-12)) {
                return Err(bad("fourth moment below squared second moment", m4 - m2 * m2));
            }
            if !(self.stderr_mean[k] >= 0.0 && self.stderr_m2[k] >= 0.0) {
                return Err(bad("negative standard error", self.stderr_mean[k].min(self.stderr_m2[k])));
            }
        }
        Ok(())
    }
}
