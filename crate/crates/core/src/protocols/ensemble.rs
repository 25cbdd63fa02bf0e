use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gta::{EmStepper, GaussianState, NoiseStream, Sample, Unraveling};
use crate::gta::trajectory::{advance, step_count};
use crate::model::{build_lattice, LatticeGraph, ModelParams};

use super::{EnsembleRecord, Schedule};

/// Everything a trajectory needs besides its own state: model, integrator
/// settings and the noise seed.
#[derive(Debug, Clone)]
pub struct Engine {
    pub params: ModelParams,
    pub lattice: LatticeGraph,
    pub unraveling: Unraveling,
    pub h: f64,
    pub seed: u64,
    /// Drive every trajectory with negated noise (Z2 partner ensemble).
    pub mirrored: bool,
    pub config_hash: String,
}

impl Engine {
    pub fn new(params: ModelParams, h: f64, seed: u64) -> Result<Self> {
        params.validate()?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParams(format!("timestep must be positive, got {h}")));
        }
        let lattice = build_lattice(&params)?;
        Ok(Engine {
            params,
            lattice,
            unraveling: Unraveling::default(),
            h,
            seed,
            mirrored: false,
            config_hash: String::new(),
        })
    }

    pub fn with_unraveling(mut self, unraveling: Unraveling) -> Self {
        self.unraveling = unraveling;
        self
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.config_hash = hash.into();
        self
    }

    pub fn mirrored(mut self) -> Self {
        self.mirrored = !self.mirrored;
        self
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn noise(&self, trajectory: u64) -> NoiseStream {
        let s = NoiseStream::new(self.seed, trajectory, self.n_sites());
        if self.mirrored {
            s.negated()
        } else {
            s
        }
    }

    /// Initial state as seen by this engine: negated displacements when mirrored.
    pub fn orient(&self, state: GaussianState) -> GaussianState {
        if self.mirrored {
            state.negated()
        } else {
            state
        }
    }
}

/// One trajectory of an ensemble in flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub trajectory: u64,
    pub state: GaussianState,
    /// Noise counter of the first step of the current stage.
    pub noise_base: u64,
}

/// A member's progress through a running job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobMember {
    pub member: Member,
    /// Steps already taken within the schedule.
    pub step: u64,
    pub samples: Vec<Sample>,
}

/// An ensemble evolving through one schedule, sampled on a fixed grid.
/// The whole struct is the checkpoint: resuming from a serialized copy
/// continues bit-identically because noise is addressed by step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleJob {
    pub label: String,
    pub schedule: Schedule,
    pub h: f64,
    pub sample_times: Vec<f64>,
    pub next_sample: usize,
    pub members: Vec<JobMember>,
}

/// `n` uniformly spaced times covering `[0, duration]`, or just `0` when the
/// schedule is shorter than half a step.
pub fn uniform_grid(duration: f64, n: usize, h: f64) -> Vec<f64> {
    if step_count(duration, h) == 0 || n < 2 {
        return vec![0.0];
    }
    (0..n)
        .map(|k| duration * k as f64 / (n - 1) as f64)
        .collect()
}

impl EnsembleJob {
    pub fn new(
        label: impl Into<String>,
        schedule: Schedule,
        h: f64,
        sample_times: Vec<f64>,
        members: Vec<Member>,
    ) -> Result<Self> {
        let mut last = f64::NEG_INFINITY;
        for &t in &sample_times {
            if !(t >= last) || t < 0.0 || t > schedule.duration() + 0.5 * h {
                return Err(Error::InvalidParams(
                    "sample times must be increasing and inside the schedule".into(),
                ));
            }
            last = t;
        }
        Ok(EnsembleJob {
            label: label.into(),
            schedule,
            h,
            sample_times,
            next_sample: 0,
            members: members
                .into_iter()
                .map(|member| JobMember {
                    member,
                    step: 0,
                    samples: Vec::new(),
                })
                .collect(),
        })
    }

    pub fn total_steps(&self) -> u64 {
        step_count(self.schedule.duration(), self.h)
    }

    pub fn is_finished(&self) -> bool {
        self.next_sample >= self.sample_times.len()
            && self.members.iter().all(|m| m.step == self.total_steps())
    }

    fn target_step(&self, sample: usize) -> u64 {
        step_count(self.sample_times[sample], self.h).min(self.total_steps())
    }

    /// Advances every member up to and including sample `until` (exclusive
    /// bound on the sample index); with `until == len` the job runs to the end.
    pub fn run_until(&mut self, engine: &Engine, until: usize) -> Result<()> {
        if (engine.h - self.h).abs() > 0.0 {
            return Err(Error::InvalidParams("engine timestep differs from job".into()));
        }
        let until = until.min(self.sample_times.len());
        let targets: Vec<u64> = (self.next_sample..until).map(|s| self.target_step(s)).collect();
        let finish = until == self.sample_times.len();
        let total = self.total_steps();
        let schedule = self.schedule;
        let h = self.h;

        self.members.par_iter_mut().try_for_each(|jm| {
            let id = jm.member.trajectory;
            let mut run = || -> Result<()> {
                let mut stepper = EmStepper::new(&engine.params, &engine.lattice, engine.unraveling)?;
                let mut noise = engine.noise(id);
                for &target in &targets {
                    advance(
                        &mut stepper,
                        &mut jm.member.state,
                        &schedule,
                        &mut noise,
                        jm.member.noise_base,
                        jm.step,
                        target,
                        h,
                    )?;
                    jm.step = target;
                    jm.member.state.check_spectrum(h)?;
                    jm.samples.push(Sample::of(&jm.member.state, target as f64 * h));
                }
                if finish {
                    advance(
                        &mut stepper,
                        &mut jm.member.state,
                        &schedule,
                        &mut noise,
                        jm.member.noise_base,
                        jm.step,
                        total,
                        h,
                    )?;
                    jm.step = total;
                }
                Ok(())
            };
            run().map_err(|e| e.in_trajectory(id))
        })?;
        self.next_sample = until;
        Ok(())
    }

    pub fn run_to_end(&mut self, engine: &Engine) -> Result<()> {
        self.run_until(engine, self.sample_times.len())
    }

    pub fn record(&self, engine: &Engine) -> Result<EnsembleRecord> {
        let per: Vec<Vec<Sample>> = self.members.iter().map(|m| m.samples.clone()).collect();
        EnsembleRecord::from_samples(&per, engine.seed, &engine.config_hash)
    }

    /// Members after the job, ready to seed the next stage (noise counters
    /// moved past the steps consumed here).
    pub fn into_members(self) -> Vec<Member> {
        self.members
            .into_iter()
            .map(|jm| Member {
                noise_base: jm.member.noise_base + jm.step,
                ..jm.member
            })
            .collect()
    }

    /// Per-trajectory order-parameter series, ordered by trajectory.
    pub fn order_series(&self) -> Vec<Vec<f64>> {
        self.members
            .iter()
            .map(|m| m.samples.iter().map(|s| s.order).collect())
            .collect()
    }
}
