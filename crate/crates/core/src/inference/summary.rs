use serde::{Deserialize, Serialize};

use super::draws::PosteriorDraws;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Identity,
    /// `exp` applied to every draw before summarizing.
    Exp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRequest {
    pub name: String,
    pub scale: Scale,
}

impl SummaryRequest {
    pub fn new(name: impl Into<String>, scale: Scale) -> Self {
        SummaryRequest { name: name.into(), scale }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub scale: Scale,
    #[serde(flatten)]
    pub stats: SummaryStats,
}

/// Linear-interpolation quantile of sorted values (R type 7).
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summary_stats(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot summarize an empty draw set".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryStats {
        mean,
        sd,
        q025: quantile(&sorted, 0.025),
        q50: quantile(&sorted, 0.5),
        q975: quantile(&sorted, 0.975),
    })
}

/// Mean, sd and 2.5/50/97.5% quantiles of each requested quantity,
/// pooling chains.
pub fn summarize(draws: &PosteriorDraws, requests: &[SummaryRequest]) -> Result<Vec<SummaryRow>> {
    requests
        .iter()
        .map(|req| {
            let mut values: Vec<f64> = draws.quantity(&req.name)?.into_iter().flatten().collect();
            if req.scale == Scale::Exp {
                values.iter_mut().for_each(|v| *v = v.exp());
            }
            Ok(SummaryRow { name: req.name.clone(), scale: req.scale, stats: summary_stats(&values)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{ChainDraws, DrawStats};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(name: &str, vals: &[f64]) -> PosteriorDraws {
        let st = DrawStats { lp: 0.0, accept_stat: 1.0, tree_depth: 0, n_leapfrog: 0, divergent: false };
        PosteriorDraws::new(
            vec![name.into()],
            vec![ChainDraws {
                values: vals.iter().map(|&v| vec![v]).collect(),
                loglik: vec![vec![]; vals.len()],
                stats: vec![st; vals.len()],
                step_size: 1.0,
                inv_metric: vec![1.0],
                divergences: 0,
                post_warmup: vals.len(),
            }],
            0,
        )
    }

    #[test]
    fn constant_draws() {
        let s = summary_stats(&[2.5; 10]).unwrap();
        assert_eq!((s.mean, s.sd, s.q025, s.q50, s.q975), (2.5, 0.0, 2.5, 2.5, 2.5));
    }

    #[test]
    fn transform_before_summarizing() {
        let d = single("beta[1,1]", &[0.0, 4f64.ln()]);
        let rows = summarize(&d, &[SummaryRequest::new("beta[1,1]", Scale::Exp)]).unwrap();
        assert!((rows[0].stats.mean - 2.5).abs() < 1e-14);
        assert!(summarize(&d, &[SummaryRequest::new("nope", Scale::Identity)]).is_err());
        assert!(summary_stats(&[]).is_err());
    }

    #[test]
    fn quantiles_match_order_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..3200).map(|_| rng.random::<f64>()).collect();
        let s = summary_stats(&v).unwrap();
        let mut sorted = v.clone();
        sorted.sort_by(f64::total_cmp);
        // type 7: h = (n - 1) p, interpolate between order statistics
        let oracle = |p: f64| {
            let h = 3199.0 * p;
            let k = h as usize;
            sorted[k] * (1.0 - (h - k as f64)) + sorted[k + 1] * (h - k as f64)
        };
        assert!((s.q025 - oracle(0.025)).abs() < 1e-15);
        assert!((s.q50 - 0.5 * (sorted[1599] + sorted[1600])).abs() < 1e-15);
        assert!((s.q975 - oracle(0.975)).abs() < 1e-15);
    }
}
