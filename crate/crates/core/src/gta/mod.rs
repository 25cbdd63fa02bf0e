//! Gaussian trajectory integrator.
//!
//! Each trajectory is a displaced Gaussian pure state conditioned on a
//! diffusive (homodyne) record of every loss channel, parameterised by the
//! displacements `alpha_i = <a_i>`, the anomalous correlations
//! `u_ij = <a_i a_j> - alpha_i alpha_j` and the normal correlations
//! `v_ij = <a_i^dag a_j> - alpha_i^* alpha_j`.

mod dynamics;
mod moments;
mod noise;
mod observables;
mod state;
pub(crate) mod trajectory;

pub use dynamics::{drift_and_noise, em_step, Drift, EmStepper, Unraveling};
pub use moments::{gaussian_moment, Ladder};
pub use noise::{NoiseRealization, NoiseStream};
pub use observables::{mode_occupation_k0, order_parameter, sign_field};
pub use state::GaussianState;
pub use trajectory::{run_trajectory, Sample, TrajectoryOutput};

/// Default Euler-Maruyama step in units of `1/J`.
pub const DEFAULT_TIMESTEP: f64 = 1e-4;
