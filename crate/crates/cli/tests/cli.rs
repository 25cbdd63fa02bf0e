use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kerrlattice::io::{read_record_csv, read_snapshot, save_checkpoint, Checkpoint, Manifest, RunConfig};
use kerrlattice::protocols::{prepare_steady_ensemble, quench_job, Engine};

const TINY: &str = r#"
sizes = [3]
velocities = [0.5, 1.0]
drives = [0.2, 0.4]
h = 2e-3
trajectories = 4
seed = 9
checkpoint_every = 2

[protocol]
g0 = 0.7
g_target = 0.86
burn_in = 1.0
n_samples = 30
t_max = 2.0
fit_t_min = 0.2

[scan]
resamples = 0

[ising]
sizes = [4, 6]
velocities = [0.05, 0.1]
realizations = 8
equilibration = 10
binder_sizes = [4, 6]
binder_temperatures = [2.1, 2.3, 2.5]
binder_chains = 2
binder_equilibration = 20
binder_measure = 50
"#;

fn kerrlattice(args: &[&str], dir: &Path, envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kerrlattice"));
    cmd.args(args).current_dir(dir).env_remove("KERRLATTICE_SEED").env_remove("KERRLATTICE_WORKERS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn assert_ok(out: &Output) {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn quench_writes_records_and_a_lossless_manifest() {
    let dir = setup(TINY);
    let out = kerrlattice(&["quench", "--config", "run.toml", "--out", "q"], dir.path(), &[]);
    assert_ok(&out);
    let q = dir.path().join("q");
    let manifest = Manifest::read(&q.join("manifest.json")).unwrap();
    let mut config = RunConfig::load(&dir.path().join("run.toml")).unwrap();
    config.out = "q".into();
    assert_eq!(manifest.config, config);
    assert_eq!(manifest.config_hash, config.hash());
    assert_eq!(manifest.command, "quench");
    assert_eq!(manifest.seed, 9);
    let text = fs::read_to_string(q.join("quench_L3_v01.csv")).unwrap();
    assert!(text.contains("time,mean,m2,m4,nk0,stderr_mean,stderr_m2,n_traj"));
    let record = read_record_csv(text.as_bytes()).unwrap();
    assert_eq!(record.n_traj, 4);
    assert_eq!(record.config_hash, config.hash());
    record.check_invariants().unwrap();
    for name in &manifest.outputs {
        assert!(q.join(name).exists(), "{name}");
    }
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = setup(TINY);
    assert_ok(&kerrlattice(&["quench", "--config", "run.toml", "--out", "whole"], dir.path(), &[]));

    // Interrupt the first stage after seven samples.
    let config = RunConfig::load(&dir.path().join("run.toml")).unwrap();
    let engine = Engine::new(config.params(3, 0.7), config.h, config.seed)
        .unwrap()
        .with_config_hash(config.hash());
    let prepared = prepare_steady_ensemble(&engine, 4, 1.0).unwrap();
    let mut job = quench_job(&prepared, &engine, 0.5, 0.86, 30).unwrap();
    job.run_until(&engine, 7).unwrap();
    let ck = dir.path().join("ck.json");
    save_checkpoint(&ck, &Checkpoint { config_hash: config.hash(), stage: 0, job }).unwrap();

    let out = kerrlattice(
        &["quench", "--config", "run.toml", "--out", "resumed", "--resume", "ck.json", "--workers", "1"],
        dir.path(),
        &[],
    );
    assert_ok(&out);
    for name in ["quench_L3_v00.csv", "quench_L3_v01.csv", "quench_L3_v01.point.json"] {
        let a = fs::read(dir.path().join("whole").join(name)).unwrap();
        let b = fs::read(dir.path().join("resumed").join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }

    // A different seed changes the configuration hash.
    let out = kerrlattice(
        &["quench", "--config", "run.toml", "--out", "other", "--resume", "ck.json", "--seed", "10"],
        dir.path(),
        &[],
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = setup("sizes = [3]\nbogus = 1\n");
    let out = kerrlattice(&["quench", "--config", "run.toml"], dir.path(), &[]);
    assert_eq!(code(&out), 2);
    let dir = setup("h = -1.0\n");
    assert_eq!(code(&kerrlattice(&["relax", "--config", "run.toml"], dir.path(), &[])), 2);
    let dir = setup(TINY);
    assert_eq!(code(&kerrlattice(&["nonsense"], dir.path(), &[])), 2);
}

#[test]
fn environment_overrides_seed_and_workers() {
    let dir = setup(TINY);
    let out = kerrlattice(
        &["gap-scan", "--config", "run.toml", "--out", "g"],
        dir.path(),
        &[("KERRLATTICE_SEED", "77"), ("KERRLATTICE_WORKERS", "1")],
    );
    assert_ok(&out);
    let manifest = Manifest::read(&dir.path().join("g/manifest.json")).unwrap();
    assert_eq!(manifest.seed, 77);
    assert_eq!(manifest.config.workers, Some(1));
    // The flag wins over the environment.
    let out = kerrlattice(
        &["gap-scan", "--config", "run.toml", "--out", "g2", "--seed", "5"],
        dir.path(),
        &[("KERRLATTICE_SEED", "77")],
    );
    assert_ok(&out);
    assert_eq!(Manifest::read(&dir.path().join("g2/manifest.json")).unwrap().seed, 5);
}

#[test]
fn gap_scan_reports_half_the_loss_rate_without_drive() {
    let dir = setup("drives = [0.0]\n");
    assert_ok(&kerrlattice(&["gap-scan", "--config", "run.toml", "--out", "g"], dir.path(), &[]));
    let text = fs::read_to_string(dir.path().join("g/gap_scan.csv")).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[1] - 0.5).abs() < 5e-4, "{text}");
    assert!((row[2] - 0.5).abs() < 5e-4, "{text}");
}

#[test]
fn relax_then_collapse() {
    let dir = setup(TINY);
    assert_ok(&kerrlattice(&["relax", "--config", "run.toml", "--out", "r"], dir.path(), &[]));
    let r = dir.path().join("r");
    let table = fs::read_to_string(r.join("relax_gaps.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert_ok(&kerrlattice(&["collapse", "--config", "run.toml", "--out", "c", "--input", "r"], dir.path(), &[]));
    let manifest = Manifest::read(&dir.path().join("c/manifest.json")).unwrap();
    assert!(manifest.summary.get("relax_gap").is_some());
    // Nothing to collapse.
    fs::create_dir_all(dir.path().join("empty")).unwrap();
    let out = kerrlattice(&["collapse", "--out", "c2", "--input", "empty"], dir.path(), &[]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ising_kz_writes_curves_and_binder_table() {
    let dir = setup(TINY);
    assert_ok(&kerrlattice(&["ising-kz", "--config", "run.toml", "--out", "i"], dir.path(), &[]));
    let i = dir.path().join("i");
    let binder = fs::read_to_string(i.join("ising_binder.csv")).unwrap();
    assert_eq!(binder.lines().count(), 1 + 2 * 3);
    let record = read_record_csv(fs::File::open(i.join("ising_L6_v00.csv")).unwrap()).unwrap();
    assert_eq!(record.n_traj, 8);
    let manifest = Manifest::read(&i.join("manifest.json")).unwrap();
    assert!(manifest.summary.get("f1").is_some());
}

#[test]
fn oracle_check_passes_every_check() {
    let dir = setup("");
    let out = kerrlattice(&["oracle-check", "--out", "o"], dir.path(), &[]);
    assert_ok(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 4, "{stdout}");
    let table = fs::read_to_string(dir.path().join("o/oracle_check.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.split(',').nth(1) == Some("true")));
}

#[test]
fn snapshot_exports_every_member() {
    let dir = setup(TINY);
    assert_ok(&kerrlattice(&["snapshot", "--config", "run.toml", "--out", "s"], dir.path(), &[]));
    let s = dir.path().join("s/snapshots");
    for stage in ["steady", "final"] {
        for k in 0..4 {
            let f = fs::File::open(s.join(format!("{stage}_L3_m{k:03}.txt"))).unwrap();
            let (side, signs) = read_snapshot(f).unwrap();
            assert_eq!(side, 3);
            assert!(signs.iter().all(|&x| x == 1 || x == -1));
        }
    }
}
