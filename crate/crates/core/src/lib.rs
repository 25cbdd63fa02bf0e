//! Gaussian-trajectory simulation of two-photon driven Kerr resonator lattices
//! with single-photon loss, together with the finite-size scaling machinery
//! used to extract dynamical critical exponents from quench and relaxation
//! experiments.
//!
//! The crate is organised by experiment layer:
//!
//! - [`model`]: physical parameters, lattice geometry and mean-field references.
//! - [`gta`]: the Gaussian trajectory integrator and per-state observables.
//! - [`oracle`]: truncated-Fock master-equation and stochastic reference solvers.
//! - [`protocols`]: steady-state preparation, linear quenches and relaxation runs.
//! - [`analysis`]: Binder cumulant, fits, data collapse and exponent scans.
//! - [`ising`]: classical 2D Ising model with Metropolis dynamics.
//! - [`io`]: run configuration, CSV records, manifests, checkpoints and snapshots.

pub mod analysis;
pub mod error;
pub mod gta;
pub mod io;
pub mod ising;
pub mod model;
pub mod oracle;
pub mod protocols;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Shorthand used throughout the crate.
pub type C64 = Complex64;
