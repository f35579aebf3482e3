//! Embarrassingly parallel MCMC.
//!
//! Data are split across M machines, each machine samples its subposterior
//! (shard likelihood times the prior to the power 1/M) with no communication,
//! and the M sample sets are fused into draws from the full posterior.
//!
//! * [`model`]: target densities, synthetic data and partitioning.
//! * [`sampler`]: random-walk Metropolis-Hastings and the per-shard fan-out.
//! * [`combine`]: parametric, nonparametric and semiparametric density-product
//!   combiners, pairwise and online variants, and the averaging/pooling
//!   baselines.
//! * [`estimate`]: KDEs, density products, L2 distances and the MSE-rate
//!   harness.
//! * [`runner`]: configuration, persistence and the error-versus-time
//!   experiment behind the `subpost` binary.

pub mod combine;
pub mod error;
pub mod estimate;
pub mod io;
pub mod model;
pub mod runner;
pub mod sampler;
pub mod samples;

pub use error::{Error, Result};
pub use samples::Samples;
