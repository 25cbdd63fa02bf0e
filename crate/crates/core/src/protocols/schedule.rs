use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time dependence of the two-photon drive over one protocol stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Hold { g: f64, duration: f64 },
    LinearRamp { g_start: f64, g_end: f64, duration: f64 },
}

impl Schedule {
    pub fn hold(g: f64, duration: f64) -> Result<Self> {
        if !g.is_finite() || !(duration >= 0.0) || !duration.is_finite() {
            return Err(Error::InvalidParams(format!(
                "hold needs finite drive and duration >= 0 (g = {g}, T = {duration})"
            )));
        }
        Ok(Schedule::Hold { g, duration })
    }

    pub fn ramp(g_start: f64, g_end: f64, duration: f64) -> Result<Self> {
        if !(g_start.is_finite() && g_end.is_finite()) || !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidParams(format!(
                "ramp needs finite drives and T > 0 (T = {duration})"
            )));
        }
        Ok(Schedule::LinearRamp {
            g_start,
            g_end,
            duration,
        })
    }

    /// Ramp from `g_start` to `g_end` at rate `v`, lasting `(g_end - g_start) / v`.
    pub fn ramp_at_velocity(g_start: f64, g_end: f64, v: f64) -> Result<Self> {
        if !(v > 0.0) {
            return Err(Error::InvalidParams(format!("quench velocity must be > 0, got {v}")));
        }
        if !(g_end > g_start) {
            return Err(Error::InvalidParams("quench target must exceed the start drive".into()));
        }
        Self::ramp(g_start, g_end, (g_end - g_start) / v)
    }

    pub fn duration(&self) -> f64 {
        match *self {
            Schedule::Hold { duration, .. } | Schedule::LinearRamp { duration, .. } => duration,
        }
    }

    pub fn velocity(&self) -> f64 {
        match *self {
            Schedule::Hold { .. } => 0.0,
            Schedule::LinearRamp {
                g_start,
                g_end,
                duration,
            } => (g_end - g_start) / duration,
        }
    }

    pub fn g_start(&self) -> f64 {
        match *self {
            Schedule::Hold { g, .. } => g,
            Schedule::LinearRamp { g_start, .. } => g_start,
        }
    }

    /// `G(t) = G_start + v t`, clamped to the ramp's endpoints.
    pub fn drive_at(&self, t: f64) -> f64 {
        match *self {
            Schedule::Hold { g, .. } => g,
            Schedule::LinearRamp {
                g_start,
                g_end,
                duration,
            } => {
                let g = g_start + (g_end - g_start) / duration * t;
                let (lo, hi) = if g_start <= g_end { (g_start, g_end) } else { (g_end, g_start) };
                g.clamp(lo, hi)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_geometry() {
        let s = Schedule::ramp_at_velocity(0.7, 0.86, 0.04).unwrap();
        assert!((s.duration() - 4.0).abs() < 1e-12);
        assert!((s.velocity() - 0.04).abs() < 1e-12);
        assert_eq!(s.drive_at(0.0), 0.7);
        assert!((s.drive_at(2.0) - 0.78).abs() < 1e-12);
        assert_eq!(s.drive_at(10.0), 0.86);
        assert_eq!(s.drive_at(-1.0), 0.7);
    }

    #[test]
    fn invalid_ramps() {
        assert!(Schedule::ramp(0.7, 0.86, 0.0).is_err());
        assert!(Schedule::ramp_at_velocity(0.7, 0.86, 0.0).is_err());
        assert!(Schedule::ramp_at_velocity(0.86, 0.7, 1.0).is_err());
        assert!(Schedule::hold(0.5, -1.0).is_err());
    }
}
