use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::draws::PosteriorDraws;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    /// `None` when the draws are constant.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub step_size: f64,
    pub mean_accept_stat: f64,
    pub mean_tree_depth: f64,
    pub divergences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub parameters: Vec<ParamDiagnostics>,
    pub divergences: usize,
    pub post_warmup_iterations: usize,
    pub chains: Vec<ChainSummary>,
    pub warnings: Vec<String>,
}

impl DiagnosticsReport {
    pub fn max_rhat(&self) -> Option<f64> {
        self.parameters.iter().filter_map(|p| p.rhat).reduce(f64::max)
    }

    pub fn min_ess(&self) -> Option<f64> {
        self.parameters.iter().filter_map(|p| p.ess).reduce(f64::min)
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn classic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let w = mean(&chains.iter().map(|c| sample_var(c)).collect::<Vec<_>>());
    let b = n * sample_var(&means);
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Normal scores of pooled ranks, with average ranks for ties.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let all: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| v.iter().enumerate().map(move |(i, &x)| (x, c, i)))
        .collect();
    let s = all.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| all[a].0.total_cmp(&all[b].0));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && all[order[j + 1]].0 == all[order[i]].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    for (k, &(_, c, idx)) in all.iter().enumerate() {
        out[c][idx] = normal.inverse_cdf((ranks[k] - 0.375) / (s as f64 + 0.25));
    }
    out
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    let half = n / 2;
    chains
        .iter()
        .flat_map(|c| {
            let c = &c[..n];
            [c[..half].to_vec(), c[n - half..].to_vec()]
        })
        .collect()
}

/// Split-R̂: the largest of the rank-normalized bulk and folded values
/// and the classic value on the raw draws.
///
/// Needs at least two split halves of 10 or more draws each. Returns
/// `None` when every draw is identical.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if chains.is_empty() || n / 2 < 10 {
        return invalid("split-Rhat needs halves of at least 10 draws");
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return invalid("draws must be finite");
    }
    let first = chains[0][0];
    if chains.iter().flatten().all(|&v| v == first) {
        return Ok(None);
    }
    let halves = split(chains);
    let bulk = classic_rhat(&rank_normalize(&halves));
    let mut pooled: Vec<f64> = halves.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let m = pooled.len();
    let median = if m % 2 == 1 { pooled[m / 2] } else { 0.5 * (pooled[m / 2 - 1] + pooled[m / 2]) };
    let folded: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|v| (v - median).abs()).collect()).collect();
    let tail = classic_rhat(&rank_normalize(&folded));
    // rank normalization saturates near 1.8 for fully separated chains
    let raw = classic_rhat(&halves);
    let r = bulk.max(tail).max(raw);
    Ok(Some(if r.is_nan() { f64::INFINITY } else { r }))
}

fn autocov(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = mean(x);
    (0..n - lag).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size across chains using Geyer's initial positive
/// and monotone sequence estimators, capped at the total draw count.
///
/// Needs at least 100 draws in total. Returns `None` for constant draws.
pub fn ess(chains: &[Vec<f64>]) -> Result<Option<f64>> {
    let m = chains.len();
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if m == 0 || n < 4 || m * n < 100 {
        return invalid("ESS needs at least 100 draws");
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return invalid("draws must be finite");
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let total = (m * n) as f64;
    let nf = n as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let chain_vars: Vec<f64> = chains.iter().map(|c| autocov(c, 0) * nf / (nf - 1.0)).collect();
    let mean_var = mean(&chain_vars);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&chain_means);
    }
    if !(var_plus > 0.0) {
        return Ok(None);
    }
    let rho_at = |t: usize| -> f64 {
        let ac = chains.iter().map(|c| autocov(c, t)).sum::<f64>() / m as f64;
        1.0 - (mean_var - ac) / var_plus
    };
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho_at(1);
    rho[1] = rho_odd;
    let mut t = 0;
    while t + 5 < n && (rho_even + rho_odd) > 0.0 {
        t += 2;
        rho_even = rho_at(t);
        rho_odd = rho_at(t + 1);
        if rho_even + rho_odd >= 0.0 {
            rho[t] = rho_even;
            rho[t + 1] = rho_odd;
        }
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho[max_t] = rho_even;
    }
    // enforce a monotone sequence of pair sums
    let mut t = 1;
    while t + 3 <= max_t {
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t] {
            rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
            rho[t + 2] = rho[t + 1];
        }
        t += 2;
    }
    let tau = -1.0 + 2.0 * rho[..max_t].iter().sum::<f64>() + rho[max_t];
    if !(tau > 0.0) {
        return Ok(Some(total));
    }
    Ok(Some((total / tau).min(total)))
}

/// Split-R̂, ESS, divergences and per-chain sampler statistics.
pub fn diagnose(draws: &PosteriorDraws) -> Result<DiagnosticsReport> {
    let mut parameters = Vec::with_capacity(draws.names().len());
    for (idx, name) in draws.names().iter().enumerate() {
        let col = draws.column(idx);
        let rhat = split_rhat(&col).ok().flatten();
        let e = ess(&col).ok().flatten();
        parameters.push(ParamDiagnostics { name: name.clone(), rhat, ess: e });
    }
    let chains: Vec<ChainSummary> = draws
        .chains()
        .iter()
        .map(|c| {
            let k = c.stats.len().max(1) as f64;
            ChainSummary {
                step_size: c.step_size,
                mean_accept_stat: c.stats.iter().map(|s| s.accept_stat).sum::<f64>() / k,
                mean_tree_depth: c.stats.iter().map(|s| s.tree_depth as f64).sum::<f64>() / k,
                divergences: c.divergences,
            }
        })
        .collect();
    let divergences = draws.divergences();
    let post = draws.post_warmup_iterations();
    let mut warnings = Vec::new();
    if post > 0 && divergences as f64 > 0.01 * post as f64 {
        warnings.push(format!(
            "{divergences} of {post} post-warmup transitions diverged ({:.2}%)",
            100.0 * divergences as f64 / post as f64
        ));
    }
    if let Some(r) = parameters.iter().filter_map(|p| p.rhat).reduce(f64::max) {
        if r > 1.01 {
            warnings.push(format!("maximum split-Rhat is {r:.3}"));
        }
    }
    Ok(DiagnosticsReport { parameters, divergences, post_warmup_iterations: post, chains, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    fn ar1(rho: f64, m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = (1.0 - rho * rho).sqrt();
        (0..m)
            .map(|_| {
                let mut x: f64 = StandardNormal.sample(&mut rng);
                (0..n)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = rho * x + sd * e;
                        x
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn rhat_iid_and_shifted() {
        let c = iid(4, 1000, 1);
        assert!(split_rhat(&c).unwrap().unwrap() < 1.01);
        let mut shifted = iid(2, 1000, 2);
        shifted[1].iter_mut().for_each(|v| *v += 10.0);
        assert!(split_rhat(&shifted).unwrap().unwrap() > 2.0);
        let one = iid(1, 1000, 3).pop().unwrap();
        let dup = vec![one.clone(), one];
        assert!((split_rhat(&dup).unwrap().unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn rhat_edge_cases() {
        assert_eq!(split_rhat(&[vec![2.0; 50], vec![2.0; 50]]).unwrap(), None);
        assert!(split_rhat(&[vec![1.0; 15]]).is_err());
        assert!(split_rhat(&[vec![f64::NAN; 40]]).is_err());
    }

    #[test]
    fn ess_iid_and_ar1() {
        let c = iid(4, 1000, 4);
        assert!(ess(&c).unwrap().unwrap() >= 0.8 * 4000.0);
        let a = ar1(0.5, 4, 5000, 5);
        let r = ess(&a).unwrap().unwrap() / 20000.0;
        assert!((r - 1.0 / 3.0).abs() < 0.2 / 3.0, "{r}");
    }

    #[test]
    fn ess_caps_alternating_sequence() {
        let alt: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(ess(&[alt]).unwrap().unwrap(), 200.0);
        assert_eq!(ess(&[vec![3.0; 200]]).unwrap(), None);
        assert!(ess(&[vec![1.0; 50]]).is_err());
    }

    #[test]
    fn rank_normalization_is_symmetric() {
        let z = rank_normalize(&[vec![1.0, 2.0, 3.0]]);
        assert!((z[0][0] + z[0][2]).abs() < 1e-12);
        assert!(z[0][1].abs() < 1e-12);
        let tied = rank_normalize(&[vec![5.0, 5.0]]);
        assert_eq!(tied[0][0], tied[0][1]);
    }
}
