//! Synthetic competing-risks data with spatially confounded effects
//! built from a linear model of coregionalization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::Dataset;
use crate::spatial::{cholesky_with_jitter, exact_cov, MaternParams};

/// Two risks × (intercept, slope).
pub const N_SURFACES: usize = 4;
pub const N_LATENT: usize = 8;

const LMC_MIXING: [[f64; N_LATENT]; N_SURFACES] = [
    [0.134154, -0.215249, -0.412325, -0.340182, 0.519028, -0.377286, -0.364444, 0.324623],
    [0.143684, 0.508034, 0.379829, -0.513306, -0.400604, 0.317774, -0.068465, -0.217607],
    [-0.040386, 0.278141, -0.856953, 0.247221, 0.233523, 0.118458, 0.190969, -0.143128],
    [-0.227276, 0.193327, 0.108388, 0.155896, -0.228447, -0.302502, -0.124775, 0.845964],
];

const LATENT_TAU: [f64; N_LATENT] = [0.3, 0.45, 0.6, 0.75, 0.9, 1.0, 1.1, 1.2];
const LATENT_ELL: [f64; N_LATENT] = [0.2, 1.5, 0.4, 1.2, 0.6, 1.0, 0.8, 0.3];

/// Seed for the once-drawn coefficient truth.
const BETA_SEED: u64 = 20240415;

/// Names of the synthetic covariates, in column order.
pub const COVARIATE_NAMES: [&str; 10] = [
    "age",
    "female",
    "race_black",
    "race_other",
    "smoking_former",
    "smoking_current",
    "single",
    "insurance_commercial",
    "insurance_wcsc",
    "insurance_selfpay",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentGp {
    pub tau: f64,
    pub lengthscale: f64,
}

/// Generating values for a simulated study with two risk types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimTruth {
    /// Coefficients per risk.
    pub beta: Vec<Vec<f64>>,
    pub beta_w: Vec<f64>,
    pub gamma: Vec<f64>,
    pub alpha: Vec<f64>,
    pub c: Vec<f64>,
    /// Mixing matrix, one row per surface (θ01, θ11, θ02, θ12).
    pub lmc: Vec<Vec<f64>>,
    pub latent: Vec<LatentGp>,
    pub censoring: f64,
    pub seed: u64,
}

impl SimTruth {
    /// The default design: ten synthetic covariates with coefficients
    /// drawn once from N(0, 0.25), β_w = (0.5, −0.7), baseline shapes
    /// γ = (1, 2), α = (10/3, 2), c = (−10, −ln 800), 40% censoring.
    pub fn default_design(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(BETA_SEED);
        let nrm = Normal::new(0.0, 0.5).expect("valid normal");
        let beta = (0..2).map(|_| (0..COVARIATE_NAMES.len()).map(|_| nrm.sample(&mut rng)).collect()).collect();
        let lmc = LMC_MIXING
            .iter()
            .map(|row| {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.iter().map(|v| v / norm).collect()
            })
            .collect();
        let latent = LATENT_TAU.iter().zip(LATENT_ELL).map(|(&tau, lengthscale)| LatentGp { tau, lengthscale }).collect();
        SimTruth {
            beta,
            beta_w: vec![0.5, -0.7],
            gamma: vec![1.0, 2.0],
            alpha: vec![10.0 / 3.0, 2.0],
            c: vec![-10.0, -(800f64.ln())],
            lmc,
            latent,
            censoring: 0.4,
            seed,
        }
    }

    pub fn n_risks(&self) -> usize {
        self.gamma.len()
    }

    pub fn p(&self) -> usize {
        self.beta.first().map_or(0, |b| b.len())
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.gamma.len();
        if m == 0 || self.alpha.len() != m || self.c.len() != m || self.beta.len() != m || self.beta_w.len() != m {
            return invalid("per-risk truth vectors must share one length");
        }
        if self.beta.iter().any(|b| b.len() != self.p()) {
            return invalid("coefficient vectors differ in length");
        }
        if self.gamma.iter().chain(&self.alpha).any(|v| !(*v > 0.0)) {
            return invalid("gamma and alpha must be positive");
        }
        if !(self.censoring > 0.0 && self.censoring < 1.0) {
            return invalid("censoring fraction must lie in (0, 1)");
        }
        if self.lmc.len() != 2 * m || self.lmc.iter().any(|r| r.len() != self.latent.len()) {
            return invalid("mixing matrix must have one row per surface and one column per latent process");
        }
        for g in &self.latent {
            MaternParams::new(g.tau, g.lengthscale)?;
        }
        Ok(())
    }
}

/// Latent GP draws mixed into the spatial surfaces, one vector per row of
/// the mixing matrix.
pub fn lmc_surfaces<R: Rng>(coords: &[[f64; 2]], truth: &SimTruth, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if coords.iter().any(|c| c.iter().any(|v| !(v.abs() <= 1.0))) {
        return Err(Error::OutOfDomain("simulation coordinates must lie in [-1, 1]^2".into()));
    }
    let n = coords.len();
    let mut latents = Vec::with_capacity(truth.latent.len());
    for g in &truth.latent {
        let cov = exact_cov(coords, MaternParams::new(g.tau, g.lengthscale)?)?;
        let chol = cholesky_with_jitter(&cov, g.tau * g.tau)?;
        let e = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        latents.push(chol.l() * e);
    }
    Ok(truth
        .lmc
        .iter()
        .map(|row| (0..n).map(|i| row.iter().zip(&latents).map(|(a, g)| a * g[i]).sum()).collect())
        .collect())
}

/// Latent event times per subject and risk by inverting
/// Λ_j(t) = γ_j exp(c_j + η_ij) t^α_j at a unit exponential draw.
pub fn draw_event_times<R: Rng>(truth: &SimTruth, eta: &[Vec<f64>], rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let m = truth.n_risks();
    eta.iter()
        .map(|row| {
            if row.len() != m || row.iter().any(|v| !v.is_finite()) {
                return invalid("linear predictors must be finite with one value per risk");
            }
            Ok((0..m).map(|j| invert_cum_hazard(truth, j, row[j], rng.sample(Exp1))).collect())
        })
        .collect()
}

fn invert_cum_hazard(truth: &SimTruth, j: usize, eta: f64, e: f64) -> f64 {
    (e * (-(truth.c[j] + eta)).exp() / truth.gamma[j]).powf(1.0 / truth.alpha[j])
}

/// Administrative censoring time leaving a fraction `target` of subjects
/// censored: the midpoint between the order statistics around the
/// (1 − target) quantile.
pub fn calibrate_censoring(first_times: &[f64], target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return invalid("censoring target must lie in (0, 1)");
    }
    if first_times.is_empty() || first_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(Error::DegenerateInput("event times must be positive and finite".into()));
    }
    let mut s = first_times.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let m = (target * n as f64).round() as usize;
    Ok(match m {
        0 => s[n - 1],
        m if m == n => 0.5 * s[0],
        m => 0.5 * (s[n - m - 1] + s[n - m]),
    })
}

/// Synthetic covariates: standardized age and centered indicators.
pub fn synthetic_covariates<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, COVARIATE_NAMES.len());
    let pick = |u: f64, probs: &[f64]| -> Option<usize> {
        let mut acc = 0.0;
        for (k, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return Some(k);
            }
        }
        None
    };
    for i in 0..n {
        x[(i, 0)] = rng.sample(StandardNormal);
        x[(i, 1)] = f64::from(rng.random::<f64>() < 0.6);
        if let Some(k) = pick(rng.random(), &[0.25, 0.08]) {
            x[(i, 2 + k)] = 1.0;
        }
        if let Some(k) = pick(rng.random(), &[0.3, 0.1]) {
            x[(i, 4 + k)] = 1.0;
        }
        x[(i, 6)] = f64::from(rng.random::<f64>() < 0.45);
        if let Some(k) = pick(rng.random(), &[0.3, 0.04, 0.03]) {
            x[(i, 7 + k)] = 1.0;
        }
    }
    center_columns(&mut x);
    x
}

fn center_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        let two_valued = col.iter().all(|v| *v == 0.0 || *v == 1.0);
        col.add_scalar_mut(-mean);
        if !two_valued {
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1.0)).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub truth: SimTruth,
}

impl SimConfig {
    pub fn default_design(n: usize, seed: u64) -> Self {
        SimConfig { n, seed, truth: SimTruth::default_design(seed) }
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    pub truth: SimTruth,
    /// θ01, θ11, θ02, θ12 at the subject locations.
    pub surfaces: Vec<Vec<f64>>,
    pub censor_time: f64,
}

/// Draws locations, covariates, surfaces and event times, then applies
/// administrative censoring.
pub fn generate_dataset(config: &SimConfig) -> Result<Simulated> {
    let truth = &config.truth;
    truth.validate()?;
    if truth.n_risks() != 2 {
        return invalid("the spatial design has exactly two risk types");
    }
    if truth.p() != COVARIATE_NAMES.len() {
        return Err(Error::InvalidArgument(format!(
            "synthetic covariates have {} columns, truth has {}",
            COVARIATE_NAMES.len(),
            truth.p()
        )));
    }
    let n = config.n;
    if n < 2 {
        return invalid("need at least two subjects");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]).collect();
    let x = synthetic_covariates(n, &mut rng);
    let mut w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let wm = w.iter().sum::<f64>() / n as f64;
    let wsd = (w.iter().map(|v| (v - wm).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    w.iter_mut().for_each(|v| *v = (*v - wm) / wsd);
    let surfaces = lmc_surfaces(&coords, truth, &mut rng)?;

    let eta: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..2)
                .map(|j| {
                    let xb: f64 = (0..truth.p()).map(|c| x[(i, c)] * truth.beta[j][c]).sum();
                    xb + w[i] * (truth.beta_w[j] + surfaces[2 * j + 1][i]) + surfaces[2 * j][i]
                })
                .collect()
        })
        .collect();
    let latent = draw_event_times(truth, &eta, &mut rng)?;
    let first: Vec<f64> = latent.iter().map(|t| t.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let censor_time = calibrate_censoring(&first, truth.censoring)?;
    let mut times = Vec::with_capacity(n);
    let mut events = Vec::with_capacity(n);
    for t in &latent {
        let (j, &tmin) = t.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("two risks");
        if tmin > censor_time {
            times.push(censor_time);
            events.push(0);
        } else {
            times.push(tmin);
            events.push(j as u8 + 1);
        }
    }
    let dataset = Dataset::new(times, events, 2, x, Some(w), coords)?;
    Ok(Simulated { dataset, truth: truth.clone(), surfaces, censor_time })
}
