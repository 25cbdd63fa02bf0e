//! Classical 2D Ising model under random-site Metropolis dynamics, quenched
//! linearly to its critical point. It runs through the same records and
//! scaling analysis as the photonic lattice and serves as a reference with
//! a known dynamical exponent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{binder_of_samples, ScalingCurve};
use crate::error::{Error, Result};
use crate::gta::Sample;
use crate::protocols::{mean_stderr, EnsembleRecord};

/// Exact critical temperature `2 / ln(1 + sqrt 2)` of the square lattice.
pub fn onsager_tc() -> f64 {
    2.0 / (1.0 + 2f64.sqrt()).ln()
}

/// Metropolis acceptance probability `min(1, e^{-dE/T})`.
pub fn acceptance(delta_e: i64, temperature: f64) -> f64 {
    if delta_e <= 0 {
        1.0
    } else {
        (-(delta_e as f64) / temperature).exp()
    }
}

/// Periodic `L x L` lattice of spins with its own random stream. The energy
/// `E = -sum_<ij> s_i s_j` is tracked incrementally.
#[derive(Debug, Clone)]
pub struct SpinLattice {
    side: usize,
    spins: Vec<i8>,
    temperature: f64,
    energy: i64,
    rng: ChaCha8Rng,
    neighbors: Vec<[u32; 4]>,
    /// `exp(-4/T)` and `exp(-8/T)`.
    boltzmann: [f64; 2],
}

impl SpinLattice {
    /// Spins drawn independently from the realization's stream.
    pub fn random(side: usize, temperature: f64, seed: u64, realization: u64) -> Result<Self> {
        let mut lat = Self::aligned(side, temperature, seed, realization)?;
        for s in &mut lat.spins {
            *s = if lat.rng.random::<bool>() { 1 } else { -1 };
        }
        lat.energy = lat.recompute_energy();
        Ok(lat)
    }

    /// All spins `+1`.
    pub fn aligned(side: usize, temperature: f64, seed: u64, realization: u64) -> Result<Self> {
        if side < 3 {
            return Err(Error::Geometry(format!("periodic Ising lattice needs side >= 3, got {side}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(realization);
        let neighbors = (0..side * side)
            .map(|i| {
                let (x, y) = (i % side, i / side);
                let at = |x: usize, y: usize| (y * side + x) as u32;
                [
                    at((x + 1) % side, y),
                    at((x + side - 1) % side, y),
                    at(x, (y + 1) % side),
                    at(x, (y + side - 1) % side),
                ]
            })
            .collect();
        let mut lat = SpinLattice {
            side,
            spins: vec![1; side * side],
            temperature: 1.0,
            energy: 0,
            rng,
            neighbors,
            boltzmann: [0.0; 2],
        };
        lat.set_temperature(temperature)?;
        lat.energy = lat.recompute_energy();
        Ok(lat)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.spins.len()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn set_temperature(&mut self, temperature: f64) -> Result<()> {
        if !(temperature > 0.0) {
            return Err(Error::InvalidParams(format!("temperature must be > 0, got {temperature}")));
        }
        self.temperature = temperature;
        self.boltzmann = [acceptance(4, temperature), acceptance(8, temperature)];
        Ok(())
    }

    pub fn energy(&self) -> i64 {
        self.energy
    }

    pub fn magnetization(&self) -> f64 {
        self.spins.iter().map(|&s| s as i64).sum::<i64>() as f64 / self.n_sites() as f64
    }

    /// Flips every spin (the Z2 partner configuration).
    pub fn flip_all(&mut self) {
        self.spins.iter_mut().for_each(|s| *s = -*s);
    }

    fn neighbor_sum(&self, i: usize) -> i64 {
        self.neighbors[i].iter().map(|&j| self.spins[j as usize] as i64).sum()
    }

    pub fn recompute_energy(&self) -> i64 {
        let l = self.side;
        (0..self.n_sites())
            .map(|i| {
                let (x, y) = (i % l, i / l);
                let s = self.spins[i] as i64;
                -s * (self.spins[y * l + (x + 1) % l] as i64 + self.spins[((y + 1) % l) * l + x] as i64)
            })
            .sum()
    }

    /// Energy change of flipping site `i`.
    pub fn flip_cost(&self, i: usize) -> i64 {
        2 * self.spins[i] as i64 * self.neighbor_sum(i)
    }

    /// One attempt at a random site. The uniform is drawn whether or not it
    /// is needed, so a configuration and its mirror consume the stream
    /// identically.
    pub fn attempt(&mut self) -> bool {
        let i = self.rng.random_range(0..self.spins.len());
        let r: f64 = self.rng.random();
        let de = self.flip_cost(i);
        let p = match de {
            d if d <= 0 => 1.0,
            4 => self.boltzmann[0],
            _ => self.boltzmann[1],
        };
        if r < p {
            self.spins[i] = -self.spins[i];
            self.energy += de;
            true
        } else {
            false
        }
    }
}

/// `N` random-site update attempts; returns the number of accepted flips.
pub fn metropolis_sweep(lattice: &mut SpinLattice) -> usize {
    (0..lattice.n_sites()).filter(|_| lattice.attempt()).count()
}

/// Linear quench in the reduced temperature `eps = (T - T_c)/T_c` from
/// `eps_0 = (T_0 - T_c)/T_c` to zero at rate `velocity` per sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsingQuench {
    pub t0: f64,
    pub t_c: f64,
    pub velocity: f64,
    pub side: usize,
    pub n_real: usize,
    pub seed: u64,
    /// Sweeps at `T_0` from random spins before the ramp starts.
    pub equilibration: usize,
    pub n_samples: usize,
}

impl IsingQuench {
    pub fn new(t0: f64, t_c: f64, velocity: f64, side: usize, n_real: usize, seed: u64) -> Self {
        IsingQuench {
            t0,
            t_c,
            velocity,
            side,
            n_real,
            seed,
            equilibration: 100,
            n_samples: 50,
        }
    }

    /// Ramp length in sweeps (zero for an instantaneous quench).
    pub fn sweeps(&self) -> u64 {
        if self.velocity.is_infinite() {
            0
        } else {
            ((self.t0 - self.t_c) / self.t_c / self.velocity).round() as u64
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.t0 > self.t_c && self.t_c > 0.0) {
            return Err(Error::InvalidParams("quench needs T_0 > T_c > 0".into()));
        }
        if !(self.velocity > 0.0) {
            return Err(Error::InvalidParams("quench velocity must be > 0".into()));
        }
        if self.n_real == 0 {
            return Err(Error::InvalidParams("need at least one realization".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsingQuenchResult {
    /// `order` is the magnetization `m`, `nk0` is `N m^2`.
    pub record: EnsembleRecord,
    /// `m` of every realization at the end of the ramp.
    pub finals: Vec<f64>,
}

/// Runs `n_real` independent realizations (in parallel, reduced in index
/// order). Temperature is held constant within a sweep at its value at the
/// sweep midpoint.
pub fn ising_linear_quench(q: &IsingQuench) -> Result<IsingQuenchResult> {
    q.validate()?;
    let total = q.sweeps();
    let eps0 = (q.t0 - q.t_c) / q.t_c;
    let targets: Vec<u64> = if total == 0 || q.n_samples < 2 {
        vec![total]
    } else {
        (0..q.n_samples)
            .map(|k| (total as f64 * k as f64 / (q.n_samples - 1) as f64).round() as u64)
            .collect()
    };
    let runs: Vec<Vec<Sample>> = (0..q.n_real as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Sample>> {
            let mut lat = SpinLattice::random(q.side, q.t0, q.seed, r)?;
            for _ in 0..q.equilibration {
                metropolis_sweep(&mut lat);
            }
            let n = lat.n_sites() as f64;
            let mut samples = Vec::with_capacity(targets.len());
            let mut k = 0;
            for &target in &targets {
                while k < target {
                    let eps = eps0 - q.velocity * (k as f64 + 0.5);
                    lat.set_temperature(q.t_c * (1.0 + eps.max(0.0)))?;
                    metropolis_sweep(&mut lat);
                    k += 1;
                }
                let m = lat.magnetization();
                samples.push(Sample {
                    t: k as f64,
                    order: m,
                    nk0: n * m * m,
                });
            }
            Ok(samples)
        })
        .collect::<Result<_>>()?;
    let finals = runs.iter().map(|s| s.last().map(|x| x.order).unwrap_or(0.0)).collect();
    Ok(IsingQuenchResult {
        record: EnsembleRecord::from_samples(&runs, q.seed, "")?,
        finals,
    })
}

/// Equilibrium Binder cumulant of `m` at each temperature, one curve per
/// size. Each point averages `n_chains` independent chains, each equilibrated
/// for `equilibration` sweeps and then sampled every sweep for `measure`
/// sweeps. The curve's standard error is the spread of per-chain cumulants.
pub fn binder_curves(
    sides: &[usize],
    temperatures: &[f64],
    n_chains: usize,
    equilibration: usize,
    measure: usize,
    seed: u64,
) -> Result<Vec<ScalingCurve>> {
    if n_chains == 0 || measure == 0 {
        return Err(Error::InvalidParams("need chains and measurement sweeps".into()));
    }
    sides
        .iter()
        .enumerate()
        .map(|(si, &side)| {
            let mut y = Vec::with_capacity(temperatures.len());
            let mut e = Vec::with_capacity(temperatures.len());
            for (ti, &t) in temperatures.iter().enumerate() {
                let chains: Vec<(f64, f64)> = (0..n_chains as u64)
                    .into_par_iter()
                    .map(|c| -> Result<(f64, f64)> {
                        let stream = ((si * temperatures.len() + ti) * n_chains) as u64 + c;
                        let mut lat = SpinLattice::random(side, t, seed, stream)?;
                        for _ in 0..equilibration {
                            metropolis_sweep(&mut lat);
                        }
                        let (mut m2, mut m4) = (0.0, 0.0);
                        for _ in 0..measure {
                            metropolis_sweep(&mut lat);
                            let m = lat.magnetization();
                            m2 += m * m;
                            m4 += m.powi(4);
                        }
                        Ok((m2 / measure as f64, m4 / measure as f64))
                    })
                    .collect::<Result<_>>()?;
                let m2 = chains.iter().map(|c| c.0).sum::<f64>() / n_chains as f64;
                let m4 = chains.iter().map(|c| c.1).sum::<f64>() / n_chains as f64;
                y.push(crate::analysis::binder_cumulant(m2, m4)?);
                let per: Vec<f64> = chains
                    .iter()
                    .map(|c| 1.0 - c.1 / (3.0 * c.0 * c.0))
                    .collect();
                e.push(mean_stderr(&per).1);
            }
            ScalingCurve::new(side, temperatures.to_vec(), y, e)
        })
        .collect()
}

/// Binder cumulant of the final magnetizations of a quench.
pub fn final_binder(result: &IsingQuenchResult) -> Result<f64> {
    binder_of_samples(&result.finals)
}
