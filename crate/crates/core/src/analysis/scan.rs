use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::mean_stderr;

use super::{
    collapse_residual_in, fit_exp_decay, CollapseMode, CriticalExponents, CriticalScales, ScalingCurve, Z_RANGE,
};

/// Per-trajectory raw data behind one point of a scaling curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PointSamples {
    /// Final `abar^2` of every trajectory; the point is their mean.
    Squares { values: Vec<f64> },
    /// `abar(t)` of every trajectory; the point is the decay rate of their mean.
    Relaxation {
        times: Vec<f64>,
        series: Vec<Vec<f64>>,
        t_min: f64,
        t_max: Option<f64>,
    },
}

impl PointSamples {
    fn n_traj(&self) -> usize {
        match self {
            PointSamples::Squares { values } => values.len(),
            PointSamples::Relaxation { series, .. } => series.len(),
        }
    }

    /// Point value and standard error from the trajectories in `pick`
    /// (all of them when `None`).
    fn reduce(&self, pick: Option<&[usize]>) -> Result<(f64, f64)> {
        let all: Vec<usize>;
        let idx = match pick {
            Some(p) => p,
            None => {
                all = (0..self.n_traj()).collect();
                &all
            }
        };
        match self {
            PointSamples::Squares { values } => {
                let xs: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
                Ok(mean_stderr(&xs))
            }
            PointSamples::Relaxation {
                times,
                series,
                t_min,
                t_max,
            } => {
                let mut mean = Vec::with_capacity(times.len());
                let mut err = Vec::with_capacity(times.len());
                for k in 0..times.len() {
                    let xs: Vec<f64> = idx.iter().map(|&i| series[i][k]).collect();
                    let (m, e) = mean_stderr(&xs);
                    mean.push(m);
                    err.push(e);
                }
                let fit = fit_exp_decay(times, &mean, &err, *t_min, *t_max)?;
                Ok((fit.rate, fit.stderr))
            }
        }
    }
}

/// Raw data of one lattice size: control values `x` (velocities or drives)
/// and the trajectories behind each point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSamples {
    pub size: usize,
    pub x: Vec<f64>,
    pub points: Vec<PointSamples>,
}

impl CurveSamples {
    pub fn curve(&self) -> Result<ScalingCurve> {
        self.reduce(None)
    }

    fn reduce(&self, picks: Option<&[Vec<usize>]>) -> Result<ScalingCurve> {
        if self.x.len() != self.points.len() {
            return Err(Error::InvalidParams("one sample set per control value required".into()));
        }
        let mut y = Vec::with_capacity(self.x.len());
        let mut e = Vec::with_capacity(self.x.len());
        for (k, p) in self.points.iter().enumerate() {
            let (v, s) = p.reduce(picks.map(|ps| ps[k].as_slice()))?;
            y.push(v);
            e.push(s);
        }
        ScalingCurve::new(self.size, self.x.clone(), y, e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub z_min: f64,
    pub z_max: f64,
    pub step: f64,
    /// Bootstrap resamples over trajectories (0 disables the interval).
    pub resamples: usize,
    /// Central coverage of the bootstrap interval.
    pub level: f64,
    pub seed: u64,
    /// Rescaled-`X` window entering the collapse residual.
    pub window: (f64, f64),
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            z_min: Z_RANGE.0,
            z_max: Z_RANGE.1,
            step: 0.01,
            resamples: 200,
            level: 0.95,
            seed: 0,
            window: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

impl ScanOptions {
    fn grid(&self) -> Result<Vec<f64>> {
        if !(self.z_min >= Z_RANGE.0 && self.z_max <= Z_RANGE.1 && self.z_max > self.z_min) {
            return Err(Error::InvalidParams(format!(
                "z grid [{}, {}] must lie inside [{}, {}]",
                self.z_min, self.z_max, Z_RANGE.0, Z_RANGE.1
            )));
        }
        if !(self.step > 0.0 && self.step <= 0.01) {
            return Err(Error::InvalidParams(format!("z step {} must be in (0, 0.01]", self.step)));
        }
        let n = ((self.z_max - self.z_min) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.z_min + k as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScan {
    pub mode: CollapseMode,
    pub z_star: f64,
    pub residual_min: f64,
    /// `false` when `max/min` of the residual over the grid is below 1.05.
    pub identifiable: bool,
    pub grid: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Central bootstrap interval of `z*`.
    pub interval: Option<(f64, f64)>,
    pub bootstrap: Vec<f64>,
    /// Bootstrap replicates whose reduction or fit failed.
    pub failed_resamples: usize,
}

const IDENTIFIABILITY_RATIO: f64 = 1.05;

/// Residual of the `f2` collapse plus the flatness of the compensated curves
/// `L^d y v^{x(z)}` inside `[v_KZ(L), v_a]`. The `f2` rescaling itself does
/// not involve `z`; the power law between the two edges does.
fn f2_objective(curves: &[ScalingCurve], e: &CriticalExponents, s: &CriticalScales, window: (f64, f64)) -> Result<f64> {
    let collapse = collapse_residual_in(curves, e, s, CollapseMode::F2, window)?;
    let x = e.kz_exponent();
    let mut pooled = Vec::new();
    for c in curves {
        let (lo, hi) = s.kz_window(c.size, e);
        let l_d = (c.size as f64).powf(e.d);
        pooled.extend(
            (0..c.len())
                .filter(|&i| c.x[i] >= lo && c.x[i] <= hi && c.y[i] > 0.0)
                .map(|i| (l_d * c.y[i] * c.x[i].powf(x)).ln()),
        );
    }
    if pooled.len() < 2 {
        return Err(Error::Fit("fewer than two points inside [v_KZ, v_a]".into()));
    }
    let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
    let flat = pooled.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / pooled.len() as f64;
    Ok(collapse + flat)
}

fn objective(
    curves: &[ScalingCurve],
    mode: CollapseMode,
    e: &CriticalExponents,
    s: &CriticalScales,
    window: (f64, f64),
) -> Result<f64> {
    match mode {
        CollapseMode::F2 => f2_objective(curves, e, s, window),
        _ => collapse_residual_in(curves, e, s, mode, window),
    }
}

fn landscape(
    curves: &[ScalingCurve],
    mode: CollapseMode,
    base: &CriticalExponents,
    scales: &CriticalScales,
    grid: &[f64],
    window: (f64, f64),
) -> Result<(usize, Vec<f64>)> {
    let residuals = grid
        .iter()
        .map(|&z| objective(curves, mode, &base.with_z(z), scales, window))
        .collect::<Result<Vec<_>>>()?;
    let best = residuals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Fit("empty z grid".into()))?;
    Ok((best, residuals))
}

/// Minimizes the collapse objective over the `z` grid for fixed curves
/// (no interval).
pub fn scan_z_curves(
    curves: &[ScalingCurve],
    mode: CollapseMode,
    base: &CriticalExponents,
    scales: &CriticalScales,
    options: &ScanOptions,
) -> Result<ZScan> {
    let grid = options.grid()?;
    let (best, residuals) = landscape(curves, mode, base, scales, &grid, options.window)?;
    let lo = residuals[best];
    let hi = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let identifiable = if lo > 0.0 { hi / lo >= IDENTIFIABILITY_RATIO } else { hi > 0.0 };
    Ok(ZScan {
        mode,
        z_star: grid[best],
        residual_min: lo,
        identifiable,
        grid,
        residuals,
        interval: None,
        bootstrap: Vec::new(),
        failed_resamples: 0,
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, f) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - f) + sorted[i + 1] * f
    } else {
        sorted[i]
    }
}

/// `z*` of the full data and a bootstrap interval from resampling the
/// trajectories behind every point independently. Replicates run in
/// parallel; each draws from its own ChaCha stream, so results do not
/// depend on the worker count.
pub fn scan_z(
    data: &[CurveSamples],
    mode: CollapseMode,
    base: &CriticalExponents,
    scales: &CriticalScales,
    options: &ScanOptions,
) -> Result<ZScan> {
    let curves = data.iter().map(|c| c.curve()).collect::<Result<Vec<_>>>()?;
    let mut scan = scan_z_curves(&curves, mode, base, scales, options)?;
    if options.resamples == 0 {
        return Ok(scan);
    }
    let grid = scan.grid.clone();
    let outcomes: Vec<Option<f64>> = (0..options.resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(b + 1);
            let replicate: Result<Vec<ScalingCurve>> = data
                .iter()
                .map(|c| {
                    let picks: Vec<Vec<usize>> = c
                        .points
                        .iter()
                        .map(|p| {
                            let n = p.n_traj();
                            (0..n).map(|_| rng.random_range(0..n)).collect()
                        })
                        .collect();
                    c.reduce(Some(&picks))
                })
                .collect();
            replicate
                .and_then(|cs| landscape(&cs, mode, base, scales, &grid, options.window))
                .ok()
                .map(|(best, _)| grid[best])
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    let mut zs: Vec<f64> = outcomes.into_iter().flatten().collect();
    if zs.len() * 10 < options.resamples * 9 {
        return Err(Error::Fit(format!(
            "{failed} of {} bootstrap replicates failed",
            options.resamples
        )));
    }
    zs.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - options.level);
    scan.interval = Some((quantile(&zs, tail), quantile(&zs, 1.0 - tail)));
    scan.bootstrap = zs;
    scan.failed_resamples = failed;
    Ok(scan)
}

/// Joint grid search over `(G_c, z)` for the gap collapse. Returns
/// `(G_c*, z*, residual)`.
pub fn scan_gc_z(
    curves: &[ScalingCurve],
    base: &CriticalExponents,
    scales: &CriticalScales,
    gc_grid: &[f64],
    options: &ScanOptions,
) -> Result<(f64, f64, f64)> {
    let grid = options.grid()?;
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY);
    for &g_c in gc_grid {
        let s = CriticalScales { g_c, ..*scales };
        if let Ok((i, res)) = landscape(curves, CollapseMode::Gap, base, &s, &grid, options.window) {
            if res[i] < best.2 {
                best = (g_c, grid[i], res[i]);
            }
        }
    }
    if best.2.is_finite() {
        Ok(best)
    } else {
        Err(Error::Fit("no admissible (G_c, z) pair".into()))
    }
}

/// Crossing point of Binder-cumulant curves `U_B(T)` of successive sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinderCrossing {
    pub estimate: f64,
    /// Crossing of each pair of consecutive sizes.
    pub crossings: Vec<f64>,
}

/// Locates where `U_B(T)` of consecutive sizes cross, by linear
/// interpolation of their difference on the union of temperature nodes.
/// Every size must have exactly one sign change of the difference.
pub fn binder_crossing(curves: &[ScalingCurve]) -> Result<BinderCrossing> {
    if curves.len() < 2 {
        return Err(Error::InvalidParams("need at least two sizes".into()));
    }
    let mut sorted: Vec<&ScalingCurve> = curves.iter().collect();
    sorted.sort_by_key(|c| c.size);
    let interp = |c: &ScalingCurve, t: f64| {
        let k = c.x.partition_point(|&x| x <= t).clamp(1, c.len() - 1);
        let (x0, x1) = (c.x[k - 1], c.x[k]);
        c.y[k - 1] + (t - x0) / (x1 - x0) * (c.y[k] - c.y[k - 1])
    };
    let mut crossings = Vec::new();
    for pair in sorted.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::InvalidParams("Binder curves need at least two points".into()));
        }
        let lo = a.x[0].max(b.x[0]);
        let hi = a.x[a.len() - 1].min(b.x[b.len() - 1]);
        let mut nodes: Vec<f64> = a.x.iter().chain(&b.x).copied().filter(|&t| t >= lo && t <= hi).collect();
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        let diff: Vec<f64> = nodes.iter().map(|&t| interp(b, t) - interp(a, t)).collect();
        let found: Vec<f64> = (1..nodes.len())
            .filter(|&k| diff[k - 1] * diff[k] <= 0.0 && diff[k - 1] != diff[k])
            .map(|k| nodes[k - 1] + diff[k - 1] / (diff[k - 1] - diff[k]) * (nodes[k] - nodes[k - 1]))
            .collect();
        match found.as_slice() {
            [t] => crossings.push(*t),
            [] => {
                return Err(Error::Fit(format!(
                    "Binder curves of L = {} and {} do not cross",
                    a.size, b.size
                )))
            }
            _ => {
                return Err(Error::Fit(format!(
                    "Binder curves of L = {} and {} cross {} times",
                    a.size,
                    b.size,
                    found.len()
                )))
            }
        }
    }
    let estimate = crossings.iter().sum::<f64>() / crossings.len() as f64;
    Ok(BinderCrossing { estimate, crossings })
}
