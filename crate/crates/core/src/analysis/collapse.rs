use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{CriticalExponents, CriticalScales, ScalingCurve};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollapseMode {
    /// `(v L^{z+1/nu}, L^{2 beta/nu} <abar^2>)`, adiabatic side.
    F1,
    /// `(v, L^d <abar^2>)`, diabatic side.
    F2,
    /// `(L^{1/nu} (G - G_c), L^z lambda)`.
    Gap,
}

/// Rescaled coordinates `(X, Y)` of one curve.
pub fn rescale(
    curve: &ScalingCurve,
    exponents: &CriticalExponents,
    scales: &CriticalScales,
    mode: CollapseMode,
) -> (Vec<f64>, Vec<f64>) {
    let l = curve.size as f64;
    let e = exponents;
    let (sx, sy, shift) = match mode {
        CollapseMode::F1 => (l.powf(e.z + 1.0 / e.nu), l.powf(2.0 * e.beta / e.nu), 0.0),
        CollapseMode::F2 => (1.0, l.powf(e.d), 0.0),
        CollapseMode::Gap => (l.powf(1.0 / e.nu), l.powf(e.z), scales.g_c),
    };
    (
        curve.x.iter().map(|x| sx * (x - shift)).collect(),
        curve.y.iter().map(|y| sy * y).collect(),
    )
}

/// Piecewise-linear curve in `(ln|X|, ln Y)`, sorted by abscissa.
struct LogCurve {
    s: Vec<f64>,
    f: Vec<f64>,
}

impl LogCurve {
    fn new(x: &[f64], y: &[f64], window: (f64, f64)) -> Result<Self> {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(x.len());
        for (&xi, &yi) in x.iter().zip(y) {
            if xi < window.0 || xi > window.1 {
                continue;
            }
            if !(yi > 0.0) || xi == 0.0 || !xi.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "collapse needs nonzero X and positive Y, got ({xi}, {yi})"
                )));
            }
            pts.push((xi.abs().ln(), yi.ln()));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(LogCurve {
            s: pts.iter().map(|p| p.0).collect(),
            f: pts.iter().map(|p| p.1).collect(),
        })
    }

    fn range(&self) -> Option<(f64, f64)> {
        Some((*self.s.first()?, *self.s.last()?))
    }

    fn at(&self, s: f64) -> f64 {
        let k = self.s.partition_point(|&p| p <= s);
        if k == 0 {
            return self.f[0];
        }
        if k == self.s.len() {
            return self.f[k - 1];
        }
        let (s0, s1) = (self.s[k - 1], self.s[k]);
        let t = (s - s0) / (s1 - s0);
        self.f[k - 1] + t * (self.f[k] - self.f[k - 1])
    }
}

/// Mean squared log-deviation of two interpolants over their overlap,
/// integrated exactly (the difference is linear between merged breakpoints).
fn pair_residual(a: &LogCurve, b: &LogCurve) -> Option<f64> {
    let (a0, a1) = a.range()?;
    let (b0, b1) = b.range()?;
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if !(hi > lo) {
        return None;
    }
    let mut knots: Vec<f64> = a
        .s
        .iter()
        .chain(&b.s)
        .copied()
        .filter(|&s| s > lo && s < hi)
        .collect();
    knots.push(lo);
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut sum = 0.0;
    for w in knots.windows(2) {
        let d0 = a.at(w[0]) - b.at(w[0]);
        let d1 = a.at(w[1]) - b.at(w[1]);
        sum += (d0 * d0 + d0 * d1 + d1 * d1) / 3.0 * (w[1] - w[0]);
    }
    Some(sum / (hi - lo))
}

/// Mean over overlapping curve pairs of the mean squared difference of
/// `ln Y` between rescaled curves, interpolated linearly in `(ln|X|, ln Y)`
/// over each pair's overlap. Zero exactly when the curves coincide on their
/// overlaps. Pairs without overlap are skipped as long as the overlaps still
/// chain every curve together (sizes far apart need not overlap directly).
pub fn collapse_residual(
    curves: &[ScalingCurve],
    exponents: &CriticalExponents,
    scales: &CriticalScales,
    mode: CollapseMode,
) -> Result<f64> {
    collapse_residual_in(curves, exponents, scales, mode, (f64::NEG_INFINITY, f64::INFINITY))
}

/// As [`collapse_residual`], keeping only points with rescaled `X` in `window`.
pub fn collapse_residual_in(
    curves: &[ScalingCurve],
    exponents: &CriticalExponents,
    scales: &CriticalScales,
    mode: CollapseMode,
    window: (f64, f64),
) -> Result<f64> {
    if curves.len() < 2 {
        return Err(Error::InvalidParams("collapse needs at least two curves".into()));
    }
    let logs = curves
        .iter()
        .map(|c| {
            let (x, y) = rescale(c, exponents, scales, mode);
            LogCurve::new(&x, &y, window)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = logs.len();
    let mut component: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if let Some(r) = pair_residual(&logs[i], &logs[j]) {
                total += r;
                pairs += 1;
                let (keep, drop) = (component[i].min(component[j]), component[i].max(component[j]));
                component.iter_mut().filter(|c| **c == drop).for_each(|c| *c = keep);
            }
        }
    }
    if let Some(j) = (0..n).find(|&j| component[j] != component[0]) {
        return Err(Error::NoOverlap { a: 0, b: j });
    }
    Ok(total / pairs as f64)
}
