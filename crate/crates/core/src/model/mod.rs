//! Competing-risks proportional cause-specific hazards model.
//!
//! The hazard for risk `j` of subject `i` is
//! `lambda_0j(t) * exp(x_i' beta_j + theta_0j(d_i) + (theta_1j(d_i) + beta_wj) w_i)`
//! with a piecewise-constant baseline built from multiplicative gamma
//! increments, and spatial surfaces represented through non-centered basis
//! weights (see [`crate::spatial`]).

mod density;
mod hazard;
mod layout;

pub use density::{linear_predictor, log_likelihood, log_posterior_grad, log_prior, Model};
pub use hazard::{
    build_time_grid, mgp_limit_correlation, mgp_prior_correlation, piecewise_cum_hazard, TimeGrid,
};
pub use layout::{ParamLayout, RiskSlots, SurfaceSlots};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::spatial::HsgpConfig;

/// Observed competing-risks data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    times: Vec<f64>,
    events: Vec<u8>,
    n_risks: usize,
    x: DMatrix<f64>,
    w: Option<Vec<f64>>,
    coords: Vec<[f64; 2]>,
}

impl Dataset {
    /// Validates and assembles a dataset. `x` is `n x p` (p may be zero).
    pub fn new(
        times: Vec<f64>,
        events: Vec<u8>,
        n_risks: usize,
        x: DMatrix<f64>,
        w: Option<Vec<f64>>,
        coords: Vec<[f64; 2]>,
    ) -> Result<Self> {
        let n = times.len();
        if n == 0 {
            return invalid("dataset has no subjects");
        }
        if n_risks == 0 {
            return invalid("at least one risk type is required");
        }
        if events.len() != n || x.nrows() != n || coords.len() != n {
            return invalid(format!(
                "length mismatch: times {n}, events {}, x rows {}, coords {}",
                events.len(),
                x.nrows(),
                coords.len()
            ));
        }
        if let Some(w) = &w {
            if w.len() != n {
                return invalid(format!("w has {} entries, expected {n}", w.len()));
            }
        }
        let mut bad = Vec::new();
        for i in 0..n {
            let ok = times[i].is_finite()
                && times[i] > 0.0
                && (events[i] as usize) <= n_risks
                && x.row(i).iter().all(|v| v.is_finite())
                && w.as_ref().map_or(true, |w| w[i].is_finite())
                && coords[i].iter().all(|c| c.is_finite());
            if !ok {
                bad.push(i);
            }
        }
        if !bad.is_empty() {
            return Err(Error::Data(format!("invalid subjects at rows {bad:?}")));
        }
        Ok(Self { times, events, n_risks, x, w, coords })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
    pub fn n_risks(&self) -> usize {
        self.n_risks
    }
    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn events(&self) -> &[u8] {
        &self.events
    }
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }
    pub fn w(&self) -> Option<&[f64]> {
        self.w.as_deref()
    }
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }
    pub fn max_time(&self) -> f64 {
        self.times.iter().copied().fold(0.0, f64::max)
    }

    /// Same subjects with replaced coordinates (e.g. after normalization).
    pub fn with_coords(mut self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.n() {
            return invalid("coordinate count mismatch");
        }
        self.coords = coords;
        Ok(self)
    }
}

/// Prior hyperparameters. Defaults are the values used in the reference
/// analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    /// Inverse-gamma shape for the coefficient variance.
    pub a_sigma: f64,
    pub b_sigma: f64,
    /// Gamma shape/rate for the first hazard increment.
    pub a0: f64,
    pub b0: f64,
    /// Inverse-gamma shape/scale for the MGP smoothness `kappa`.
    pub a1: f64,
    pub b1: f64,
    /// Variance of the half-normal prior on GP magnitudes.
    pub sigma_tau_sq: f64,
    /// Inverse-gamma shape/scale for lengthscales, truncated above at `ell_max`.
    pub a_ell: f64,
    pub b_ell: f64,
    pub ell_max: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            a_sigma: 1.0,
            b_sigma: 1.0,
            a0: 1.0,
            b0: 1.0,
            a1: 2.0,
            b1: 40.0,
            sigma_tau_sq: 16.0,
            a_ell: 2.0,
            b_ell: 1.0,
            ell_max: 10.0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a0", self.a0),
            ("b0", self.b0),
            ("a1", self.a1),
            ("b1", self.b1),
            ("sigma_tau_sq", self.sigma_tau_sq),
            ("a_ell", self.a_ell),
            ("b_ell", self.b_ell),
            ("ell_max", self.ell_max),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("hyperparameter {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// Which spatially varying terms enter the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpatialMode {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "intercept")]
    Intercept,
    #[serde(rename = "intercept+slope")]
    InterceptSlope,
}

impl SpatialMode {
    pub fn has_intercept(self) -> bool {
        !matches!(self, SpatialMode::None)
    }
    pub fn has_slope(self) -> bool {
        matches!(self, SpatialMode::InterceptSlope)
    }
    pub fn label(self) -> &'static str {
        match self {
            SpatialMode::None => "none",
            SpatialMode::Intercept => "intercept",
            SpatialMode::InterceptSlope => "intercept+slope",
        }
    }
}

/// Representation of the spatial Gaussian processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GpApprox {
    /// Low-rank Hilbert-space basis expansion.
    Hsgp(HsgpConfig),
    /// Exact Matérn covariance via Cholesky factorization (small n only).
    Exact,
}

/// Model structure. The Matérn smoothness is fixed at 3/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub spatial: SpatialMode,
    /// Number of baseline hazard intervals.
    pub intervals: usize,
    pub gp: GpApprox,
}

impl ModelSpec {
    pub fn new(spatial: SpatialMode, intervals: usize, gp: GpApprox) -> Result<Self> {
        if intervals == 0 {
            return invalid("interval count must be at least 1");
        }
        Ok(Self { spatial, intervals, gp })
    }
}

/// Parameters of one spatial surface in non-centered form.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceParams {
    pub z: Vec<f64>,
    pub tau: f64,
    pub lengthscale: f64,
}

/// Per-risk unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskParams {
    pub beta: Vec<f64>,
    pub beta_w: Option<f64>,
    /// Multiplicative hazard increments `psi_0..psi_{k-1}`.
    pub psi: Vec<f64>,
    pub intercept: Option<SurfaceParams>,
    pub slope: Option<SurfaceParams>,
}

impl RiskParams {
    /// Baseline hazard rates `lambda_l = prod_{r<=l} psi_r`.
    pub fn hazard_rates(&self) -> Vec<f64> {
        let mut acc = 1.0;
        self.psi
            .iter()
            .map(|p| {
                acc *= p;
                acc
            })
            .collect()
    }
}

/// All model unknowns on their natural scale. `sigma2` is absent when the
/// model has no regression coefficients; `kappa` is absent for a single
/// hazard interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub risks: Vec<RiskParams>,
    pub sigma2: Option<f64>,
    pub kappa: Option<f64>,
}

#[cfg(test)]
mod tests;
