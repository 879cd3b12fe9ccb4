//! Bayesian competing-risks survival models with spatially varying
//! intercepts and slopes.
//!
//! The crate covers the model and its gradients ([`model`]), Matérn
//! Gaussian processes with a Hilbert-space low-rank approximation
//! ([`spatial`]), a dynamic Hamiltonian sampler with diagnostics and WAIC
//! ([`inference`]), Bayes-optimal clustering of posterior surfaces
//! ([`clustering`]), synthetic data generation ([`simulate`]), and the
//! batch command-line front end ([`cli`]).

pub mod error;
pub mod model;
pub mod spatial;
pub mod inference;
pub mod clustering;
pub mod simulate;
pub mod cli;

pub use error::{Error, Result};
