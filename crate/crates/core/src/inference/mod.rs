//! Posterior sampling, convergence diagnostics, WAIC and summaries.

mod adapt;
mod diagnostics;
mod draws;
mod fit;
mod nuts;
mod summary;
mod waic;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::Model;

pub use diagnostics::{diagnose, ess, split_rhat, ChainSummary, DiagnosticsReport, ParamDiagnostics};
pub use draws::{ChainDraws, DrawStats, PosteriorDraws};
pub use fit::{fit, sample, RawChain};
pub use nuts::leapfrog;
pub use summary::{quantile, summarize, summary_stats, Scale, SummaryRequest, SummaryRow, SummaryStats};
pub use waic::{waic, WaicReport};

/// A differentiable log density on an unconstrained space.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log density at `u`; the gradient is written into `grad`.
    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64>;
}

impl LogDensity for Model {
    fn dim(&self) -> usize {
        Model::dim(self)
    }

    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.eval(u, Some(grad), None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup: 1000,
            iterations: 4000,
            thin: 5,
            seed: 20240101,
            target_accept: 0.9,
            max_tree_depth: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.warmup == 0 || self.iterations == 0 || self.thin == 0 {
            return invalid("chains, warmup, iterations and thin must all be at least 1");
        }
        if self.thin > self.iterations {
            return invalid("thin exceeds iterations; no draws would be kept");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return invalid("target_accept must lie in (0, 1)");
        }
        if self.max_tree_depth == 0 {
            return invalid("max_tree_depth must be at least 1");
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        self.iterations / self.thin
    }
}
