//! Truncated-Fock reference solvers: the Lindblad master equation for one or
//! two sites, steady states, Liouvillian gaps and a diffusive stochastic
//! Schrodinger equation sharing its noise with the Gaussian integrator.

mod fock;
mod master;
mod sse;

pub use fock::{FockDensityMatrix, FockSpace};
pub use master::{
    build_generator, evolve, liouvillian_gap, steady_state, GapEstimate, GapMethod, Generator,
    SteadyMethod, DEFAULT_CUTOFF,
};
pub use sse::{coherent_ket, fock_sse_trajectory, FockSample, SseOptions};
