//! One-shot trajectory learning for open-system exciton dynamics.
//!
//! Reference trajectories of the reduced density matrix are generated with a
//! local thermalising Lindblad master equation ([`ltlme`]), turned into one
//! supervised example per trajectory ([`dataset`]), and learned by a
//! multi-output 1D convolutional network ([`cnn`]) that emits the whole
//! trajectory from `(j, lambda, gamma, T)` in a single forward pass
//! ([`eval`]).

pub mod cnn;
pub mod codec;
pub mod error;
pub mod exciton;
pub mod dataset;
pub mod eval;
pub mod ltlme;

pub use error::{Error, Result};
pub use exciton::{ParameterGrid, SimulationPoint, SystemSpec};
pub use ltlme::{DensityMatrix, TimeGrid, Trajectory};
