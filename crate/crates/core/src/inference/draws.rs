use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParamLayout, ParameterState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub lp: f64,
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
}

/// Retained draws of one chain, constrained scale, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    pub values: Vec<Vec<f64>>,
    /// Pointwise log-likelihood per retained draw.
    pub loglik: Vec<Vec<f64>>,
    pub stats: Vec<DrawStats>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    /// Divergent transitions over all post-warmup iterations, thinned or not.
    pub divergences: usize,
    pub post_warmup: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    names: Vec<String>,
    chains: Vec<ChainDraws>,
    pub seed: u64,
    pub config_hash: Option<String>,
}

fn parse_pair(s: &str, prefix: &str) -> Option<(usize, usize)> {
    let inner = s.strip_prefix(prefix)?.strip_prefix('[')?.strip_suffix(']')?;
    let (a, b) = inner.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

impl PosteriorDraws {
    pub fn new(names: Vec<String>, chains: Vec<ChainDraws>, seed: u64) -> Self {
        PosteriorDraws { names, chains, seed, config_hash: None }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn chains(&self) -> &[ChainDraws] {
        &self.chains
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.values.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Per-chain draws of a stored parameter.
    pub fn column(&self, idx: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.values.iter().map(|v| v[idx]).collect()).collect()
    }

    /// Names of the derived baseline hazard rates `lambda[j,l]`.
    pub fn hazard_rate_names(&self) -> Vec<String> {
        self.names
            .iter()
            .filter_map(|n| parse_pair(n, "psi").map(|(j, l)| format!("lambda[{j},{l}]")))
            .collect()
    }

    /// Per-chain draws of a stored parameter or a derived hazard rate
    /// `lambda[j,l]` (the cumulative product of `psi[j,1..=l]`).
    pub fn quantity(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        if let Some(idx) = self.index_of(name) {
            return Ok(self.column(idx));
        }
        if let Some((j, l)) = parse_pair(name, "lambda") {
            let idx: Option<Vec<usize>> = (1..=l).map(|r| self.index_of(&format!("psi[{j},{r}]"))).collect();
            if let Some(idx) = idx.filter(|v| !v.is_empty()) {
                return Ok(self
                    .chains
                    .iter()
                    .map(|c| c.values.iter().map(|v| idx.iter().map(|&i| v[i]).product()).collect())
                    .collect());
            }
        }
        Err(Error::InvalidArgument(format!("unknown quantity '{name}'")))
    }

    /// All retained draws in chain order as parameter states.
    pub fn states(&self, layout: &ParamLayout) -> Result<Vec<ParameterState>> {
        if layout.dim() != self.names.len() {
            return Err(Error::InvalidArgument("layout does not match the stored draws".into()));
        }
        Ok(self.chains.iter().flat_map(|c| c.values.iter().map(|v| layout.state_from_constrained(v))).collect())
    }

    /// Pointwise log-likelihood rows for all retained draws, chain order.
    pub fn loglik_rows(&self) -> Vec<&[f64]> {
        self.chains.iter().flat_map(|c| c.loglik.iter().map(|r| r.as_slice())).collect()
    }

    pub fn divergences(&self) -> usize {
        self.chains.iter().map(|c| c.divergences).sum()
    }

    pub fn post_warmup_iterations(&self) -> usize {
        self.chains.iter().map(|c| c.post_warmup).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> PosteriorDraws {
        let stats = DrawStats { lp: 0.0, accept_stat: 1.0, tree_depth: 1, n_leapfrog: 1, divergent: false };
        let chain = |vals: Vec<Vec<f64>>| ChainDraws {
            loglik: vals.iter().map(|_| vec![0.0]).collect(),
            stats: vec![stats; vals.len()],
            values: vals,
            step_size: 0.1,
            inv_metric: vec![1.0; 3],
            divergences: 0,
            post_warmup: 2,
        };
        PosteriorDraws::new(
            vec!["psi[1,1]".into(), "psi[1,2]".into(), "beta[1,1]".into()],
            vec![chain(vec![vec![2.0, 3.0, 0.5], vec![1.0, 0.5, 0.1]]), chain(vec![vec![4.0, 0.25, 0.0]])],
            7,
        )
    }

    #[test]
    fn hazard_rates_are_cumulative_products() {
        let d = toy();
        assert_eq!(d.hazard_rate_names(), vec!["lambda[1,1]", "lambda[1,2]"]);
        assert_eq!(d.quantity("lambda[1,2]").unwrap(), vec![vec![6.0, 0.5], vec![1.0]]);
        assert_eq!(d.quantity("beta[1,1]").unwrap(), vec![vec![0.5, 0.1], vec![0.0]]);
        assert!(matches!(d.quantity("lambda[2,1]"), Err(Error::InvalidArgument(_))));
        assert!(d.quantity("gamma").is_err());
        assert_eq!(d.total_draws(), 3);
        assert_eq!(d.loglik_rows().len(), 3);
    }
}
