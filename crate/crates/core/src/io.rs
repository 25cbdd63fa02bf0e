//! Run configuration, CSV records, manifests, checkpoints and snapshot
//! files. Every text format here is locale-independent and round-trips
//! `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{CriticalScales, ScanOptions};
use crate::error::{Error, Result};
use crate::gta::DEFAULT_TIMESTEP;
use crate::model::ModelParams;
use crate::protocols::{EnsembleRecord, DEFAULT_BURN_IN, DEFAULT_SAMPLES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub delta: f64,
    pub u_kerr: f64,
    pub j_hop: f64,
    pub gamma: f64,
    pub periodic: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            delta: -1.0,
            u_kerr: 1.0,
            j_hop: 1.0,
            gamma: 1.0,
            periodic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSpec {
    /// Drive of the initial steady state of a quench.
    pub g0: f64,
    /// Drive at the end of a quench.
    pub g_target: f64,
    pub burn_in: f64,
    pub n_samples: usize,
    /// Length of relaxation runs.
    pub t_max: f64,
    /// Start of the relaxation fit window (default depends on `L`).
    pub fit_t_min: Option<f64>,
    pub fit_t_max: Option<f64>,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            g0: 0.7,
            g_target: 0.86,
            burn_in: DEFAULT_BURN_IN,
            n_samples: DEFAULT_SAMPLES,
            t_max: 60.0,
            fit_t_min: None,
            fit_t_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSpec {
    pub z_min: f64,
    pub z_max: f64,
    pub step: f64,
    pub resamples: usize,
    pub level: f64,
    pub g_c: f64,
    pub v_a: f64,
    pub kz_prefactor: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        let s = CriticalScales::default();
        ScanSpec {
            z_min: 1.5,
            z_max: 3.0,
            step: 0.01,
            resamples: 200,
            level: 0.95,
            g_c: s.g_c,
            v_a: s.v_a,
            kz_prefactor: s.kz_prefactor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsingSpec {
    pub sizes: Vec<usize>,
    /// Ramp rates of the reduced temperature, per sweep.
    pub velocities: Vec<f64>,
    pub realizations: usize,
    /// `T_0 / T_c`.
    pub t0_ratio: f64,
    pub equilibration: usize,
    /// Fastest ramp inside the universal window, per sweep.
    pub v_a: f64,
    pub binder_sizes: Vec<usize>,
    pub binder_temperatures: Vec<f64>,
    pub binder_chains: usize,
    pub binder_equilibration: usize,
    pub binder_measure: usize,
}

impl Default for IsingSpec {
    fn default() -> Self {
        IsingSpec {
            sizes: vec![32, 64, 128],
            velocities: (0..9).map(|k| 1e-4 * 10f64.powf(k as f64 / 4.0)).collect(),
            realizations: 200,
            t0_ratio: 1.5,
            equilibration: 100,
            v_a: 1e-2,
            binder_sizes: vec![8, 16, 32],
            binder_temperatures: (0..9).map(|k| 2.21 + 0.015 * k as f64).collect(),
            binder_chains: 16,
            binder_equilibration: 2000,
            binder_measure: 20000,
        }
    }
}

/// Everything a run depends on. Missing keys take their defaults; unknown
/// keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub protocol: ProtocolSpec,
    pub sizes: Vec<usize>,
    pub velocities: Vec<f64>,
    pub drives: Vec<f64>,
    pub h: f64,
    /// Per-point trajectory count; the velocity-dependent default when absent.
    pub trajectories: Option<usize>,
    pub seed: u64,
    pub out: PathBuf,
    /// Worker threads; all available cores when absent.
    pub workers: Option<usize>,
    /// Samples between checkpoint writes (0 disables checkpoints).
    pub checkpoint_every: usize,
    pub snapshots: bool,
    pub scan: ScanSpec,
    pub ising: IsingSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelSpec::default(),
            protocol: ProtocolSpec::default(),
            sizes: vec![4, 6, 8],
            velocities: (0..9).map(|k| 1e-2 * 10f64.powf(k as f64 / 4.0)).collect(),
            drives: (0..7).map(|k| 0.74 + 0.02 * k as f64).collect(),
            h: DEFAULT_TIMESTEP,
            trajectories: None,
            seed: 1,
            out: PathBuf::from("out"),
            workers: None,
            checkpoint_every: 0,
            snapshots: false,
            scan: ScanSpec::default(),
            ising: IsingSpec::default(),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

fn finite(name: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().find(|x| !x.is_finite()) {
        Some(x) => Err(Error::Config(format!("{name} contains non-finite value {x}"))),
        None => Ok(()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        finite("model", &[m.delta, m.u_kerr])?;
        positive("model.gamma", m.gamma)?;
        positive("model.j_hop", m.j_hop)?;
        positive("h", self.h)?;
        positive("protocol.t_max", self.protocol.t_max)?;
        finite("protocol", &[self.protocol.g0, self.protocol.g_target])?;
        if !(self.protocol.burn_in >= 0.0) {
            return Err(Error::Config("protocol.burn_in must be >= 0".into()));
        }
        if self.sizes.iter().any(|&l| l == 0) || self.ising.sizes.iter().any(|&l| l < 3) {
            return Err(Error::Config("lattice sizes must be positive (Ising sizes >= 3)".into()));
        }
        for v in self.velocities.iter().chain(&self.ising.velocities) {
            positive("velocity", *v)?;
        }
        finite("drives", &self.drives)?;
        finite("ising.binder_temperatures", &self.ising.binder_temperatures)?;
        if self.trajectories == Some(0) || self.workers == Some(0) || self.ising.realizations == 0 {
            return Err(Error::Config("trajectory, realization and worker counts must be positive".into()));
        }
        positive("ising.v_a", self.ising.v_a)?;
        if !(self.ising.t0_ratio > 1.0) {
            return Err(Error::Config("ising.t0_ratio must exceed 1".into()));
        }
        if !(self.scan.level > 0.0 && self.scan.level < 1.0) {
            return Err(Error::Config("scan.level must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded. The output
    /// directory and worker count do not change results and are left out.
    pub fn hash(&self) -> String {
        let essential = RunConfig {
            out: PathBuf::new(),
            workers: None,
            ..self.clone()
        };
        let canonical = serde_json::to_string(&essential).expect("configuration serializes");
        sha256_hex(canonical.as_bytes())
    }

    pub fn params(&self, side: usize, g: f64) -> ModelParams {
        ModelParams {
            delta: self.model.delta,
            u_kerr: self.model.u_kerr,
            g_drive: g,
            j_hop: self.model.j_hop,
            gamma: self.model.gamma,
            dims: vec![side, side],
            periodic: self.model.periodic,
        }
    }

    pub fn scales(&self) -> CriticalScales {
        CriticalScales {
            g_c: self.scan.g_c,
            v_a: self.scan.v_a,
            kz_prefactor: self.scan.kz_prefactor,
        }
    }

    /// Scales of the Ising quench, whose control parameter is the reduced
    /// temperature (critical point at zero).
    pub fn ising_scales(&self) -> CriticalScales {
        CriticalScales {
            g_c: 0.0,
            v_a: self.ising.v_a,
            kz_prefactor: self.scan.kz_prefactor,
        }
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions {
            z_min: self.scan.z_min,
            z_max: self.scan.z_max,
            step: self.scan.step,
            resamples: self.scan.resamples,
            level: self.scan.level,
            seed: self.seed,
            ..ScanOptions::default()
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Metadata written next to every run's data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    /// Free-form results of the run (fits, scans, checks).
    #[serde(default)]
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            command: command.to_string(),
            config: config.clone(),
            config_hash: config.hash(),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Pretty JSON, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, serde_json::to_string_pretty(value)?.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub const CSV_COLUMNS: [&str; 8] = ["time", "mean", "m2", "m4", "nk0", "stderr_mean", "stderr_m2", "n_traj"];

/// Writes a record as CSV after `#`-prefixed `key = value` header lines
/// (seed and configuration hash are always included).
pub fn write_record_csv<W: Write>(mut w: W, record: &EnsembleRecord, meta: &[(&str, String)]) -> Result<()> {
    writeln!(w, "# seed = {}", record.seed)?;
    writeln!(w, "# config_hash = {}", record.config_hash)?;
    for (k, v) in meta {
        writeln!(w, "# {k} = {v}")?;
    }
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for k in 0..record.len() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            record.times[k],
            record.mean[k],
            record.m2[k],
            record.m4[k],
            record.nk0[k],
            record.stderr_mean[k],
            record.stderr_m2[k],
            record.n_traj
        )?;
    }
    Ok(())
}

/// Inverse of [`write_record_csv`]; unknown header keys are ignored.
pub fn read_record_csv<R: Read>(r: R) -> Result<EnsembleRecord> {
    let mut rec = EnsembleRecord {
        times: Vec::new(),
        mean: Vec::new(),
        m2: Vec::new(),
        m4: Vec::new(),
        nk0: Vec::new(),
        stderr_mean: Vec::new(),
        stderr_m2: Vec::new(),
        n_traj: 0,
        seed: 0,
        config_hash: String::new(),
    };
    let bad = |msg: String| Error::Serde(format!("record CSV: {msg}"));
    let mut header_seen = false;
    for line in BufReader::new(r).lines() {
        let line = line?;
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                match k.trim() {
                    "seed" => rec.seed = v.trim().parse().map_err(|_| bad(format!("bad seed {v}")))?,
                    "config_hash" => rec.config_hash = v.trim().to_string(),
                    _ => {}
                }
            }
            continue;
        }
        if !header_seen {
            if line.split(',').ne(CSV_COLUMNS.iter().copied()) {
                return Err(bad(format!("unexpected header {line}")));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != CSV_COLUMNS.len() {
            return Err(bad(format!("expected {} columns, got {}", CSV_COLUMNS.len(), f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s}")));
        rec.times.push(num(f[0])?);
        rec.mean.push(num(f[1])?);
        rec.m2.push(num(f[2])?);
        rec.m4.push(num(f[3])?);
        rec.nk0.push(num(f[4])?);
        rec.stderr_mean.push(num(f[5])?);
        rec.stderr_m2.push(num(f[6])?);
        rec.n_traj = f[7].parse().map_err(|_| bad(format!("bad count {}", f[7])))?;
    }
    if !header_seen {
        return Err(bad("missing column header".into()));
    }
    Ok(rec)
}

/// Serialized in-progress state of a run, tied to its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub config_hash: String,
    /// Position of the job within the run (e.g. which velocity).
    pub stage: usize,
    pub job: T,
}

pub fn save_checkpoint<T: Serialize>(path: &Path, checkpoint: &Checkpoint<T>) -> Result<()> {
    write_atomic(path, serde_json::to_string(checkpoint)?.as_bytes())
}

/// Loads a checkpoint and refuses it unless it was written under the
/// configuration whose hash is `expected_hash`.
pub fn load_checkpoint<T: DeserializeOwned>(path: &Path, expected_hash: &str) -> Result<Checkpoint<T>> {
    let checkpoint: Checkpoint<T> = serde_json::from_str(&fs::read_to_string(path)?)?;
    if checkpoint.config_hash != expected_hash {
        return Err(Error::ResumeMismatch {
            expected: expected_hash.to_string(),
            found: checkpoint.config_hash,
        });
    }
    Ok(checkpoint)
}

/// Writes a sign field as `side` rows of `+1`/`-1` after a `#` header.
pub fn write_snapshot<W: Write>(mut w: W, signs: &[i8], side: usize, meta: &[(&str, String)]) -> Result<()> {
    if side == 0 || signs.len() != side * side {
        return Err(Error::InvalidParams(format!(
            "snapshot of {} sites is not a {side}x{side} grid",
            signs.len()
        )));
    }
    writeln!(w, "# side = {side}")?;
    for (k, v) in meta {
        writeln!(w, "# {k} = {v}")?;
    }
    for row in signs.chunks(side) {
        let cells: Vec<&str> = row.iter().map(|&s| if s > 0 { "+1" } else { "-1" }).collect();
        writeln!(w, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// Reads a snapshot back as `(side, signs)`.
pub fn read_snapshot<R: Read>(r: R) -> Result<(usize, Vec<i8>)> {
    let mut signs = Vec::new();
    let mut rows = 0;
    for line in BufReader::new(r).lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        rows += 1;
        for cell in line.split_whitespace() {
            signs.push(match cell {
                "+1" => 1,
                "-1" => -1,
                _ => return Err(Error::Serde(format!("snapshot cell {cell}"))),
            });
        }
    }
    if signs.len() != rows * rows {
        return Err(Error::Serde(format!("{} cells in {rows} rows", signs.len())));
    }
    Ok((rows, signs))
}

/// Mean of a sign field.
pub fn sign_magnetization(signs: &[i8]) -> f64 {
    signs.iter().map(|&s| s as f64).sum::<f64>() / signs.len() as f64
}
