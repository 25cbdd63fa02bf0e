//! Experiment protocols: steady-state preparation at fixed drive, linear
//! drive quenches towards the critical point, and relaxation from a fully
//! polarized state for gap extraction.

mod ensemble;
mod record;
mod schedule;

pub use ensemble::{uniform_grid, Engine, EnsembleJob, JobMember, Member};
pub use record::EnsembleRecord;
pub use schedule::Schedule;

pub(crate) use record::mean_stderr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gta::{sign_field, GaussianState};
use crate::C64;

/// Burn-in time at the initial drive, in `1/J`.
pub const DEFAULT_BURN_IN: f64 = 50.0;
/// Samples per run.
pub const DEFAULT_SAMPLES: usize = 200;
/// Samples per quarter used by the stationarity check.
const QUARTER_SAMPLES: usize = 64;

/// Trajectory count for a quench at velocity `v`: `10^3` for `v >= 10^-2 J^2`,
/// `10^2` for slower quenches.
pub fn default_trajectory_count(v: f64) -> usize {
    if v >= 1e-2 {
        1000
    } else {
        100
    }
}

/// Fit window `[t_min, t_max]` for the relaxation of an `L x L` lattice.
pub fn default_fit_window(side: usize) -> (f64, Option<f64>) {
    match side {
        8 => (10.0, Some(50.0)),
        0..=10 => (20.0, None),
        11..=12 => (30.0, None),
        _ => (40.0, None),
    }
}

/// Comparison of `<abar^2>` averaged over the third and fourth quarter of
/// the burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityCheck {
    pub third_quarter: f64,
    pub fourth_quarter: f64,
    /// Combined standard error of the two quarter averages.
    pub combined_stderr: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedEnsemble {
    pub g0: f64,
    pub burn_in: f64,
    pub members: Vec<Member>,
    pub stationarity: StationarityCheck,
}

impl PreparedEnsemble {
    pub fn require_stationary(&self) -> Result<()> {
        let s = self.stationarity;
        if s.passed {
            Ok(())
        } else {
            Err(Error::NotStationary(format!(
                "<abar^2> moved from {:.5} to {:.5} (combined stderr {:.2e}) over the last half of \
                 a {} burn-in; raise the burn-in time",
                s.third_quarter, s.fourth_quarter, s.combined_stderr, self.burn_in
            )))
        }
    }
}

/// Evolves `n_traj` trajectories from vacuum for `burn_in` at the drive in
/// `engine.params` and checks that `<abar^2>` has settled.
pub fn prepare_steady_ensemble(engine: &Engine, n_traj: usize, burn_in: f64) -> Result<PreparedEnsemble> {
    if n_traj == 0 {
        return Err(Error::InvalidParams("need at least one trajectory".into()));
    }
    let g0 = engine.params.g_drive;
    let schedule = Schedule::hold(g0, burn_in)?;
    let q = QUARTER_SAMPLES;
    let times: Vec<f64> = if burn_in > 0.0 {
        (1..=2 * q)
            .map(|k| burn_in * (0.5 + 0.5 * k as f64 / (2 * q) as f64))
            .collect()
    } else {
        Vec::new()
    };
    let members = (0..n_traj as u64)
        .map(|trajectory| Member {
            trajectory,
            state: engine.orient(GaussianState::vacuum(engine.n_sites())),
            noise_base: 0,
        })
        .collect();
    let mut job = EnsembleJob::new("burn-in", schedule, engine.h, times, members)?;
    job.run_to_end(engine)?;

    let quarter_means = |range: std::ops::Range<usize>| -> Vec<f64> {
        job.members
            .iter()
            .map(|m| {
                let s = &m.samples[range.clone()];
                s.iter().map(|x| x.order * x.order).sum::<f64>() / s.len() as f64
            })
            .collect()
    };
    let stationarity = if burn_in > 0.0 {
        let (m3, se3) = mean_stderr(&quarter_means(0..q));
        let (m4, se4) = mean_stderr(&quarter_means(q..2 * q));
        let combined = (se3 * se3 + se4 * se4).sqrt();
        StationarityCheck {
            third_quarter: m3,
            fourth_quarter: m4,
            combined_stderr: combined,
            passed: (m3 - m4).abs() <= 2.0 * combined,
        }
    } else {
        StationarityCheck {
            third_quarter: 0.0,
            fourth_quarter: 0.0,
            combined_stderr: 0.0,
            passed: false,
        }
    };

    Ok(PreparedEnsemble {
        g0,
        burn_in,
        members: job.into_members(),
        stationarity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuenchResult {
    pub velocity: f64,
    pub duration: f64,
    pub record: EnsembleRecord,
    /// `abar` of every trajectory at `t = T`.
    pub finals: Vec<f64>,
    /// `sign(Im alpha_i)` of every trajectory at `t = T`, when requested.
    pub snapshots: Option<Vec<Vec<i8>>>,
}

/// Builds the quench job without running it (for checkpointed drivers).
pub fn quench_job(
    prepared: &PreparedEnsemble,
    engine: &Engine,
    v: f64,
    g_target: f64,
    n_samples: usize,
) -> Result<EnsembleJob> {
    let schedule = Schedule::ramp_at_velocity(prepared.g0, g_target, v)?;
    let times = uniform_grid(schedule.duration(), n_samples, engine.h);
    EnsembleJob::new(
        format!("quench v={v:e}"),
        schedule,
        engine.h,
        times,
        prepared.members.clone(),
    )
}

/// Collects the quench observables from a finished job.
pub fn finish_quench(job: &EnsembleJob, engine: &Engine, snapshots: bool) -> Result<QuenchResult> {
    if !job.is_finished() {
        return Err(Error::InvalidParams("quench job has not finished".into()));
    }
    let record = job.record(engine)?;
    let finals = job
        .members
        .iter()
        .map(|m| m.samples.last().map(|s| s.order).unwrap_or(f64::NAN))
        .collect();
    Ok(QuenchResult {
        velocity: job.schedule.velocity(),
        duration: job.schedule.duration(),
        record,
        finals,
        snapshots: snapshots.then(|| {
            job.members
                .iter()
                .map(|m| sign_field(&m.member.state))
                .collect()
        }),
    })
}

/// Ramps every member of `prepared` linearly from `G_0` to `g_target` at
/// velocity `v` and records the ensemble along the way, ending at `t = T`.
pub fn linear_quench(
    prepared: &PreparedEnsemble,
    engine: &Engine,
    v: f64,
    g_target: f64,
    n_samples: usize,
    snapshots: bool,
) -> Result<QuenchResult> {
    let mut job = quench_job(prepared, engine, v, g_target, n_samples)?;
    job.run_to_end(engine)?;
    finish_quench(&job, engine, snapshots)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationResult {
    pub g: f64,
    pub record: EnsembleRecord,
    /// Per-trajectory `abar(t)` on the record's time grid.
    pub series: Vec<Vec<f64>>,
}

pub fn relaxation_job(engine: &Engine, t_max: f64, n_traj: usize, n_samples: usize) -> Result<EnsembleJob> {
    if n_traj == 0 {
        return Err(Error::InvalidParams("need at least one trajectory".into()));
    }
    let g = engine.params.g_drive;
    let schedule = Schedule::hold(g, t_max)?;
    let times = uniform_grid(t_max, n_samples, engine.h);
    let members = (0..n_traj as u64)
        .map(|trajectory| Member {
            trajectory,
            state: engine.orient(GaussianState::polarized(engine.n_sites(), C64::new(0.0, 1.0))),
            noise_base: 0,
        })
        .collect();
    EnsembleJob::new(format!("relax G={g}"), schedule, engine.h, times, members)
}

/// Free evolution at fixed drive from `alpha_j = i` on every site.
pub fn relaxation_run(engine: &Engine, t_max: f64, n_traj: usize, n_samples: usize) -> Result<RelaxationResult> {
    let mut job = relaxation_job(engine, t_max, n_traj, n_samples)?;
    job.run_to_end(engine)?;
    Ok(RelaxationResult {
        g: engine.params.g_drive,
        record: job.record(engine)?,
        series: job.order_series(),
    })
}
