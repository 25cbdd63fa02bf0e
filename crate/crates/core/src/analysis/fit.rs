use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CriticalExponents, CriticalScales, ScalingCurve};

/// Straight-line fit `y = a + b x`.
#[derive(Debug, Clone, Copy)]
struct Line {
    slope: f64,
    slope_stderr: f64,
    r_squared: f64,
}

/// Least squares with optional per-point standard deviations. With
/// deviations the slope error follows from them, inflated by
/// `sqrt(chi^2/dof)` when the scatter exceeds them; without, it is the
/// residual-based error of ordinary least squares.
fn fit_line(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Line {
    let n = x.len();
    let w: Vec<f64> = match sigma {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    let slope = sxy / sxx;
    let chi2: f64 = (0..n)
        .map(|i| {
            let r = y[i] - my - slope * (x[i] - mx);
            w[i] * r * r
        })
        .sum();
    let dof = n.saturating_sub(2).max(1) as f64;
    let slope_stderr = match sigma {
        Some(_) => (1.0 / sxx).sqrt() * (chi2 / dof).sqrt().max(1.0),
        None => (chi2 / dof / sxx).sqrt(),
    };
    let r_squared = if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 };
    Line {
        slope,
        slope_stderr,
        r_squared,
    }
}

fn weights_from(stderr: &[f64], scale: &[f64]) -> Option<Vec<f64>> {
    if stderr.iter().all(|&s| s > 0.0) {
        Some(stderr.iter().zip(scale).map(|(s, y)| s / y.abs()).collect())
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub rate: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub n_used: usize,
}

const MIN_DECAY_POINTS: usize = 10;
const NOISE_FLOOR: f64 = 3.0;

/// Fits `y ~ e^{-rate t}` by least squares on `ln y` over `[t_min, t_max]`.
/// The window is cut at the first point whose mean is not above three
/// standard errors; points are weighted by `y / stderr` when errors are
/// given (all zero means exact data).
pub fn fit_exp_decay(
    times: &[f64],
    mean: &[f64],
    stderr: &[f64],
    t_min: f64,
    t_max: Option<f64>,
) -> Result<ExpFit> {
    if times.len() != mean.len() || times.len() != stderr.len() {
        return Err(Error::InvalidParams("series columns differ in length".into()));
    }
    let t_max = t_max.unwrap_or(f64::INFINITY);
    let mut end = None;
    let mut start = None;
    for (i, &t) in times.iter().enumerate() {
        if t < t_min {
            continue;
        }
        if t > t_max {
            break;
        }
        start.get_or_insert(i);
        if stderr[i] > 0.0 && !(mean[i] > NOISE_FLOOR * stderr[i]) {
            break;
        }
        if !(mean[i] > 0.0) {
            return Err(Error::Fit(format!("non-positive mean {} at t = {t} inside the fit window", mean[i])));
        }
        end = Some(i + 1);
    }
    let (Some(start), Some(end)) = (start, end) else {
        return Err(Error::Fit("no usable points after t_min".into()));
    };
    let n = end - start;
    if n < MIN_DECAY_POINTS {
        return Err(Error::Fit(format!(
            "only {n} points above the noise floor in the fit window (need {MIN_DECAY_POINTS})"
        )));
    }
    let t = &times[start..end];
    let logy: Vec<f64> = mean[start..end].iter().map(|y| y.ln()).collect();
    let sigma = weights_from(&stderr[start..end], &mean[start..end]);
    let line = fit_line(t, &logy, sigma.as_deref());
    Ok(ExpFit {
        rate: -line.slope,
        stderr: line.slope_stderr,
        r_squared: line.r_squared,
        n_used: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    /// `x` in `y ~ v^{-x}`.
    pub exponent: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub n_used: usize,
}

const MIN_POWER_POINTS: usize = 5;

/// Log-log fit of `y ~ x^{-exponent}` over points with `x` in `[lo, hi]`.
pub fn fit_power_law(curve: &ScalingCurve, window: (f64, f64)) -> Result<PowerFit> {
    let idx: Vec<usize> = (0..curve.len())
        .filter(|&i| curve.x[i] >= window.0 && curve.x[i] <= window.1)
        .collect();
    if idx.len() < MIN_POWER_POINTS {
        return Err(Error::Fit(format!(
            "{} points in [{:e}, {:e}] (need {MIN_POWER_POINTS})",
            idx.len(),
            window.0,
            window.1
        )));
    }
    if idx.iter().any(|&i| !(curve.x[i] > 0.0 && curve.y[i] > 0.0)) {
        return Err(Error::Fit("power-law fit needs positive x and y".into()));
    }
    let lx: Vec<f64> = idx.iter().map(|&i| curve.x[i].ln()).collect();
    let ly: Vec<f64> = idx.iter().map(|&i| curve.y[i].ln()).collect();
    let err: Vec<f64> = idx.iter().map(|&i| curve.stderr[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| curve.y[i]).collect();
    let line = fit_line(&lx, &ly, weights_from(&err, &ys).as_deref());
    Ok(PowerFit {
        exponent: -line.slope,
        stderr: line.slope_stderr,
        r_squared: line.r_squared,
        n_used: idx.len(),
    })
}

/// Points with `L^{1/nu} (G - G_c)` below this value lie in the `xi < L` regime.
pub const GAP_RESCALED_CUTOFF: f64 = -1.0;
const MIN_GAP_POINTS: usize = 4;

/// Slope `z nu` of `ln lambda` against `ln |G - G_c|` for a curve of gaps
/// `y = lambda` at drives `x = G`, keeping points whose rescaled distance
/// `L^{1/nu} (G - G_c)` is below `cutoff`. The returned exponent is the
/// slope itself (positive when the gap closes at `G_c`).
pub fn gap_power_law(
    curve: &ScalingCurve,
    scales: &CriticalScales,
    exponents: &CriticalExponents,
    cutoff: f64,
) -> Result<PowerFit> {
    let l = (curve.size as f64).powf(1.0 / exponents.nu);
    let idx: Vec<usize> = (0..curve.len())
        .filter(|&i| l * (curve.x[i] - scales.g_c) < cutoff && curve.x[i] < scales.g_c)
        .collect();
    if idx.len() < MIN_GAP_POINTS {
        return Err(Error::Fit(format!(
            "{} gap points with rescaled distance below {cutoff} (need {MIN_GAP_POINTS})",
            idx.len()
        )));
    }
    if idx.iter().any(|&i| !(curve.y[i] > 0.0)) {
        return Err(Error::Fit("gap values must be positive".into()));
    }
    let lx: Vec<f64> = idx.iter().map(|&i| (scales.g_c - curve.x[i]).ln()).collect();
    let ly: Vec<f64> = idx.iter().map(|&i| curve.y[i].ln()).collect();
    let err: Vec<f64> = idx.iter().map(|&i| curve.stderr[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| curve.y[i]).collect();
    let line = fit_line(&lx, &ly, weights_from(&err, &ys).as_deref());
    Ok(PowerFit {
        exponent: line.slope,
        stderr: line.slope_stderr,
        r_squared: line.r_squared,
        n_used: idx.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential() {
        let t: Vec<f64> = (0..40).map(|k| 0.5 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * (-0.3 * t).exp()).collect();
        let fit = fit_exp_decay(&t, &y, &vec![0.0; 40], 0.0, None).unwrap();
        assert!((fit.rate - 0.3).abs() < 1e-12);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn decay_window_errors() {
        let t: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        let e: Vec<f64> = vec![1e-4; 20];
        // Mean drops below 3 stderr after t = 8.
        assert!(fit_exp_decay(&t, &y, &e, 0.0, None).is_err());
        let mut neg = y.clone();
        neg[5] = -1.0;
        assert!(fit_exp_decay(&t, &neg, &vec![0.0; 20], 0.0, None).is_err());
    }

    #[test]
    fn exact_power_law() {
        let v: Vec<f64> = (0..8).map(|k| 10f64.powf(-2.0 + 0.25 * k as f64)).collect();
        let y: Vec<f64> = v.iter().map(|v| v.powf(-0.55)).collect();
        let c = ScalingCurve::exact(6, v, y).unwrap();
        let fit = fit_power_law(&c, (1e-3, 10.0)).unwrap();
        assert!((fit.exponent - 0.55).abs() < 1e-12);
        assert!(fit_power_law(&c, (1e-3, 1e-2)).is_err());
    }

    #[test]
    fn exact_gap_slope() {
        let g: Vec<f64> = (0..10).map(|k| 0.3 + 0.05 * k as f64).collect();
        let lam: Vec<f64> = g.iter().map(|g| (0.86f64 - g).abs().powf(2.18)).collect();
        let c = ScalingCurve::exact(8, g, lam).unwrap();
        let fit = gap_power_law(&c, &CriticalScales::default(), &CriticalExponents::ising(2.18), GAP_RESCALED_CUTOFF)
            .unwrap();
        assert!((fit.exponent - 2.18).abs() < 1e-12);
        // Points with 8 (G - 0.86) >= -1 are excluded.
        assert_eq!(fit.n_used, 9);
    }
}
