use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaicReport {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    /// Per-subject contributions to `waic`.
    pub pointwise: Vec<f64>,
}

/// WAIC from a draws × subjects matrix of pointwise log-likelihoods.
pub fn waic<R: AsRef<[f64]>>(loglik: &[R]) -> Result<WaicReport> {
    let s = loglik.len();
    if s < 2 {
        return Err(Error::InvalidArgument("WAIC needs at least two draws".into()));
    }
    let n = loglik[0].as_ref().len();
    if loglik.iter().any(|r| r.as_ref().len() != n) {
        return Err(Error::InvalidArgument("ragged log-likelihood matrix".into()));
    }
    let bad: Vec<usize> = (0..n).filter(|&i| loglik.iter().any(|r| !r.as_ref()[i].is_finite())).collect();
    if !bad.is_empty() {
        return Err(Error::Numerical(format!("non-finite pointwise log-likelihood for subjects {bad:?}")));
    }
    let sf = s as f64;
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut pointwise = Vec::with_capacity(n);
    for i in 0..n {
        let col = loglik.iter().map(|r| r.as_ref()[i]);
        let max = col.clone().fold(f64::NEG_INFINITY, f64::max);
        let lme = max + (col.clone().map(|v| (v - max).exp()).sum::<f64>() / sf).ln();
        let mean = col.clone().sum::<f64>() / sf;
        let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / (sf - 1.0);
        lppd += lme;
        p_waic += var;
        pointwise.push(-2.0 * (lme - var));
    }
    Ok(WaicReport { waic: -2.0 * (lppd - p_waic), lppd, p_waic, pointwise })
}
