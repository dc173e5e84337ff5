//! Learn a cellular-automaton update rule for two-species reaction-diffusion
//! dynamics from sampled grid snapshots, roll it out to predict pattern
//! formation, and identify the governing PDE by sparse regression.
//!
//! The pipeline, end to end:
//!
//! 1. [`solver`] integrates the activator-inhibitor system with an explicit
//!    finite-difference scheme and records snapshots at a fixed interval.
//! 2. [`dataset`] turns snapshot pairs into per-cell transition samples and
//!    applies the observation treatments (Gaussian noise, temporal sparsity,
//!    equilibrium-restricted availability).
//! 3. [`train`] fits the neighborhood-to-state-change network; [`rollout`]
//!    applies the learned rule recursively from an initial state.
//! 4. [`sindy`] regresses estimated time derivatives onto an 18-term
//!    candidate library with sequentially thresholded least squares.
//! 5. [`metrics`] scores predicted against observed states; [`harness`]
//!    drives the full experiments with seeded reproducibility.
//!
//! See the crate examples for one runnable program per capability.

pub mod dataset;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod net;
pub mod rollout;
pub mod sindy;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
pub use grid::{laplacian, neighborhood, wrap_index, Field2D, GridState, NeighborhoodSample};
pub use solver::{random_init, simulate, SimParams, Trajectory};
