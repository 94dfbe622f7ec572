//! Sequential importance sampling calibration of a stochastic SEIR simulator.
//!
//! The crate is layered bottom-up:
//!
//! - [`sim`]: daily, event-driven compartment model with exact checkpoints.
//! - [`bias`]: binomial thinning from true to reported counts.
//! - [`likelihood`]: Gaussian log-likelihood on square-root counts.
//! - [`sis`]: priors, weights, resampling and the windowed sampler.
//! - [`ensemble`]: deterministic parallel fan-out over a checkpoint store.
//! - [`experiment`]: configs, ground truth, calibration runs and outputs.

pub mod bias;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod likelihood;
pub mod rng;
pub mod sim;
pub mod sis;

pub use error::{Error, Result};
