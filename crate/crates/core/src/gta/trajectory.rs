use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LatticeGraph, ModelParams};
use crate::protocols::Schedule;

use super::{mode_occupation_k0, order_parameter, EmStepper, GaussianState, NoiseStream, Unraveling};

/// Observables recorded at one sample time (relative to the schedule start).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub order: f64,
    pub nk0: f64,
}

impl Sample {
    pub fn of(state: &GaussianState, t: f64) -> Self {
        Sample {
            t,
            order: order_parameter(state),
            nk0: mode_occupation_k0(state),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutput {
    pub state: GaussianState,
    pub samples: Vec<Sample>,
    /// Noise counter after the last step.
    pub next_step: u64,
}

/// Number of Euler steps covering `duration`.
pub(crate) fn step_count(duration: f64, h: f64) -> u64 {
    (duration / h).round() as u64
}

/// Integrates one trajectory through `schedule`, starting the noise counter
/// at `start_step`. Samples are taken at the step boundary nearest to each
/// requested time; the spectrum of `v` is checked at every sample.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    initial: GaussianState,
    schedule: &Schedule,
    params: &ModelParams,
    lattice: &LatticeGraph,
    unraveling: Unraveling,
    h: f64,
    noise: &mut NoiseStream,
    start_step: u64,
    sample_times: &[f64],
) -> Result<TrajectoryOutput> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParams(format!("timestep must be positive, got {h}")));
    }
    let total = step_count(schedule.duration(), h);
    let mut targets = Vec::with_capacity(sample_times.len());
    let mut last = f64::NEG_INFINITY;
    for &ts in sample_times {
        if !(ts >= last) || ts < 0.0 || ts > schedule.duration() + 0.5 * h {
            return Err(Error::InvalidParams(format!(
                "sample times must be increasing and inside [0, {}]",
                schedule.duration()
            )));
        }
        last = ts;
        targets.push(step_count(ts, h).min(total));
    }

    let mut stepper = EmStepper::new(params, lattice, unraveling)?;
    let mut state = initial;
    let mut samples = Vec::with_capacity(targets.len());
    let mut k = 0;
    for target in targets {
        advance(&mut stepper, &mut state, schedule, noise, start_step, k, target, h)?;
        k = target;
        state.check_spectrum(h)?;
        samples.push(Sample::of(&state, k as f64 * h));
    }
    advance(&mut stepper, &mut state, schedule, noise, start_step, k, total, h)?;

    Ok(TrajectoryOutput {
        state,
        samples,
        next_step: start_step + total,
    })
}

/// Steps `state` from schedule step `from` to `to`, reading noise step
/// `noise_base + k` for schedule step `k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn advance(
    stepper: &mut EmStepper<'_>,
    state: &mut GaussianState,
    schedule: &Schedule,
    noise: &mut NoiseStream,
    noise_base: u64,
    from: u64,
    to: u64,
    h: f64,
) -> Result<()> {
    let mut dw = vec![0.0; stepper.n_sites()];
    for k in from..to {
        noise.fill(noise_base + k, h, &mut dw);
        stepper.step(state, schedule.drive_at(k as f64 * h), h, &dw)?;
    }
    Ok(())
}
