//! Python bindings. Heavy calls release the interpreter lock; results come
//! back as plain floats, lists and dicts. Parameter errors raise
//! `ValueError`, numerical aborts raise `RuntimeError`.

use std::collections::HashMap;

use kerr::analysis::{binder_of_samples, fit_exp_decay as fit_exp};
use kerr::gta::DEFAULT_TIMESTEP;
use kerr::ising::{ising_linear_quench as ising_quench_run, onsager_tc as tc, IsingQuench};
use kerr::model::ModelParams;
use kerr::oracle::{build_generator, liouvillian_gap as gap, steady_state, GapMethod, SteadyMethod, DEFAULT_CUTOFF};
use kerr::protocols::{linear_quench, prepare_steady_ensemble, relaxation_run, Engine, EnsembleRecord};
use kerr::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type Columns = HashMap<&'static str, Vec<f64>>;

fn to_py(e: Error) -> PyErr {
    if e.is_numeric() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn columns(record: EnsembleRecord) -> Columns {
    HashMap::from([
        ("time", record.times),
        ("mean", record.mean),
        ("m2", record.m2),
        ("m4", record.m4),
        ("nk0", record.nk0),
        ("stderr_mean", record.stderr_mean),
        ("stderr_m2", record.stderr_m2),
    ])
}

/// Critical temperature of the square-lattice Ising model, `2 / ln(1 + sqrt 2)`.
#[pyfunction]
fn onsager_tc() -> f64 {
    tc()
}

/// Single-site Liouvillian gap from the truncated master equation;
/// `method` is `"spectral"` or `"decay-fit"`.
#[pyfunction]
#[pyo3(signature = (delta, u_kerr, g, gamma=1.0, method="spectral", cutoff=DEFAULT_CUTOFF))]
fn liouvillian_gap(py: Python<'_>, delta: f64, u_kerr: f64, g: f64, gamma: f64, method: &str, cutoff: usize) -> PyResult<f64> {
    let method = match method {
        "spectral" => GapMethod::Spectral,
        "decay-fit" => GapMethod::default(),
        other => return Err(PyValueError::new_err(format!("unknown gap method {other:?}"))),
    };
    py.detach(|| {
        let generator = build_generator(&ModelParams::single_site(delta, u_kerr, g, gamma), cutoff, 1)?;
        gap(&generator, method).map(|e| e.rate)
    })
    .map_err(to_py)
}

/// Steady-state photon number of one site from the master equation.
#[pyfunction]
#[pyo3(signature = (delta, u_kerr, g, gamma=1.0, cutoff=DEFAULT_CUTOFF))]
fn steady_occupation(py: Python<'_>, delta: f64, u_kerr: f64, g: f64, gamma: f64, cutoff: usize) -> PyResult<f64> {
    py.detach(|| {
        let generator = build_generator(&ModelParams::single_site(delta, u_kerr, g, gamma), cutoff, 1)?;
        steady_state(&generator, SteadyMethod::NullSpace).map(|rho| rho.occupation(0))
    })
    .map_err(to_py)
}

/// Ensemble relaxation of an `L x L` lattice at fixed drive from `alpha_j = i`.
#[pyfunction]
#[pyo3(signature = (side, g, t_max, n_traj, n_samples=200, h=DEFAULT_TIMESTEP, seed=1))]
fn relaxation(py: Python<'_>, side: usize, g: f64, t_max: f64, n_traj: usize, n_samples: usize, h: f64, seed: u64) -> PyResult<Columns> {
    py.detach(|| {
        let engine = Engine::new(ModelParams::standard(side, g), h, seed)?;
        relaxation_run(&engine, t_max, n_traj, n_samples)
    })
    .map(|r| columns(r.record))
    .map_err(to_py)
}

/// Burn-in at `g0` followed by a linear ramp to `g_target` at `velocity`.
/// The dict also holds the per-trajectory final order parameter (`finals`).
#[pyfunction]
#[pyo3(signature = (side, velocity, n_traj, g0=0.7, g_target=0.86, burn_in=50.0, n_samples=200, h=DEFAULT_TIMESTEP, seed=1))]
#[allow(clippy::too_many_arguments)]
fn quench(
    py: Python<'_>,
    side: usize,
    velocity: f64,
    n_traj: usize,
    g0: f64,
    g_target: f64,
    burn_in: f64,
    n_samples: usize,
    h: f64,
    seed: u64,
) -> PyResult<Columns> {
    py.detach(|| {
        let engine = Engine::new(ModelParams::standard(side, g0), h, seed)?;
        let prepared = prepare_steady_ensemble(&engine, n_traj, burn_in)?;
        linear_quench(&prepared, &engine, velocity, g_target, n_samples, false)
    })
    .map(|q| {
        let mut out = columns(q.record);
        out.insert("finals", q.finals);
        out
    })
    .map_err(to_py)
}

/// Final magnetizations of Metropolis quenches from `t0_ratio T_c` to `T_c`
/// at `velocity` per sweep.
#[pyfunction]
#[pyo3(signature = (side, velocity, n_real, t0_ratio=1.5, seed=1))]
fn ising_quench(py: Python<'_>, side: usize, velocity: f64, n_real: usize, t0_ratio: f64, seed: u64) -> PyResult<Vec<f64>> {
    py.detach(|| ising_quench_run(&IsingQuench::new(t0_ratio * tc(), tc(), velocity, side, n_real, seed)))
        .map(|r| r.finals)
        .map_err(to_py)
}

#[pyfunction]
fn binder_cumulant(samples: Vec<f64>) -> PyResult<f64> {
    binder_of_samples(&samples).map_err(to_py)
}

/// Weighted fit of `A e^{-rate t}`; returns `(rate, stderr)`.
#[pyfunction]
#[pyo3(signature = (times, values, stderr, t_min=0.0, t_max=None))]
fn fit_exp_decay(times: Vec<f64>, values: Vec<f64>, stderr: Vec<f64>, t_min: f64, t_max: Option<f64>) -> PyResult<(f64, f64)> {
    fit_exp(&times, &values, &stderr, t_min, t_max)
        .map(|f| (f.rate, f.stderr))
        .map_err(to_py)
}

#[pymodule]
fn kerrlattice(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(onsager_tc, m)?)?;
    m.add_function(wrap_pyfunction!(liouvillian_gap, m)?)?;
    m.add_function(wrap_pyfunction!(steady_occupation, m)?)?;
    m.add_function(wrap_pyfunction!(relaxation, m)?)?;
    m.add_function(wrap_pyfunction!(quench, m)?)?;
    m.add_function(wrap_pyfunction!(ising_quench, m)?)?;
    m.add_function(wrap_pyfunction!(binder_cumulant, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exp_decay, m)?)?;
    Ok(())
}
