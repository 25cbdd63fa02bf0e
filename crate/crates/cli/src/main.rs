//! `kerrlattice` command-line driver. Each subcommand runs one experiment,
//! writes CSV/JSON data into the output directory and finishes with a
//! `manifest.json` holding the configuration, its hash, the seed and a summary.
//!
//! Exit codes: 0 success, 2 configuration error (including resume mismatch),
//! 3 numerical abort, 1 anything else (file system).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use kerrlattice::io::{Manifest, RunConfig};
use kerrlattice::{Error, Result};

use commands::Context;

#[derive(Debug, Parser)]
#[command(name = "kerrlattice", version, about = "Kerr-lattice quench, relaxation and scaling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration (defaults apply to missing keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration.
    #[arg(long, global = true, env = "KERRLATTICE_SEED")]
    seed: Option<u64>,

    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads, overriding the configuration.
    #[arg(long, global = true, env = "KERRLATTICE_WORKERS")]
    workers: Option<usize>,

    /// Checkpoint written by an interrupted run of the same command.
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Linear quenches G0 -> G_target for every size and velocity.
    Quench,
    /// Relaxation from the polarized state for every size and drive; gap table.
    Relax,
    /// Single-site Liouvillian gap from the master equation for every drive.
    GapScan,
    /// Collapse scans of quench (f1, f2) and relaxation (gap) data.
    Collapse {
        /// Directory holding the `*.point.json` files (defaults to the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Metropolis Kibble-Zurek quenches of the 2D Ising model and a Binder crossing.
    IsingKz,
    /// Equivalence checks between the Gaussian integrator and the Fock oracles.
    OracleCheck,
    /// One quench with sign-field snapshots of every member, before and after.
    Snapshot,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Quench => "quench",
            Command::Relax => "relax",
            Command::GapScan => "gap-scan",
            Command::Collapse { .. } => "collapse",
            Command::IsingKz => "ising-kz",
            Command::OracleCheck => "oracle-check",
            Command::Snapshot => "snapshot",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::ResumeMismatch { .. } | Error::InvalidParams(_) | Error::Geometry(_) => 2,
        e if e.is_numeric() => 3,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let start = Instant::now();
    let config = load_config(&cli)?;
    if let Some(n) = config.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
    }
    std::fs::create_dir_all(&config.out)?;
    let name = cli.command.name();
    let mut ctx = Context::new(config, cli.resume.clone());
    let summary = match &cli.command {
        Command::Quench => commands::quench(&mut ctx)?,
        Command::Relax => commands::relax(&mut ctx)?,
        Command::GapScan => commands::gap_scan(&mut ctx)?,
        Command::Collapse { input } => commands::collapse(&mut ctx, input.clone())?,
        Command::IsingKz => commands::ising_kz(&mut ctx)?,
        Command::OracleCheck => commands::oracle_check(&mut ctx)?,
        Command::Snapshot => commands::snapshot(&mut ctx)?,
    };
    let mut manifest = Manifest::new(name, &ctx.config);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.outputs = ctx.outputs.clone();
    manifest.summary = summary;
    manifest.write(&ctx.config.out.join("manifest.json"))?;
    commands::check_failures(&manifest.summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
