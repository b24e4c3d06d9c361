//! Simulation and Bayesian inference for an eight-compartment epidemic
//! state-space model with time-varying transmission, detection and death
//! rates.
//!
//! The pieces, bottom up:
//!
//! - [`model`]: compartment state, one-day dynamics, equilibrium
//!   reproduction number.
//! - [`basis`]: spline bases and the time-varying rate curves.
//! - [`stochastic`]: process noise, count observations, synthetic epidemics.
//! - [`likelihood`]: priors, parameter transforms, log-posterior.
//! - [`ad`]: the reverse-mode tape behind exact gradients.
//! - [`sampler`]: No-U-Turn sampler and convergence diagnostics.
//! - [`ingest`]: case/death and mobility CSV ingestion.
//! - [`analysis`]: posterior summaries.
//! - [`scenario`]: synthetic scenarios with known truth.
//! - [`validate`]: the fast invariant suite.
//! - [`cli`]: the `epistate` command line.

pub mod ad;
pub mod analysis;
pub mod cli;
pub mod ingest;
pub mod basis;
pub mod likelihood;
pub mod model;
pub mod stochastic;
pub mod validate;
pub mod sampler;
pub mod scenario;
