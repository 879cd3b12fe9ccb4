use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adapt::{metric_windows, DualAveraging, VarianceEstimator};
use super::draws::{ChainDraws, DrawStats, PosteriorDraws};
use super::nuts::{Nuts, Point};
use super::{LogDensity, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::Model;

const INIT_ATTEMPTS: usize = 100;

/// Post-warmup output of one chain on the unconstrained scale.
#[derive(Debug, Clone)]
pub struct RawChain {
    pub draws: Vec<Vec<f64>>,
    pub stats: Vec<DrawStats>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub divergences: usize,
    pub post_warmup: usize,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64 + 1);
    rng
}

fn initial_point<T: LogDensity + ?Sized>(target: &T, rng: &mut ChaCha8Rng) -> Result<Point> {
    for _ in 0..INIT_ATTEMPTS {
        let q: Vec<f64> = (0..target.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(p) = Point::at(target, q) {
            return Ok(p);
        }
    }
    Err(Error::Initialization(INIT_ATTEMPTS))
}

fn run_chain<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig, chain: usize) -> Result<RawChain> {
    let mut rng = chain_rng(config.seed, chain);
    let mut point = initial_point(target, &mut rng)?;
    let dim = target.dim();
    let mut nuts = Nuts { target, eps: 1.0, inv_metric: vec![1.0; dim], max_depth: config.max_tree_depth };
    nuts.init_stepsize(&point, &mut rng)?;

    let mut dual = DualAveraging::new(config.target_accept);
    dual.restart(nuts.eps);
    let windows = metric_windows(config.warmup);
    let mut estimator = VarianceEstimator::new(dim);

    let mut out = RawChain {
        draws: Vec::with_capacity(config.draws_per_chain()),
        stats: Vec::with_capacity(config.draws_per_chain()),
        step_size: 0.0,
        inv_metric: Vec::new(),
        divergences: 0,
        post_warmup: config.iterations,
    };

    for it in 0..config.warmup + config.iterations {
        let tr = nuts.transition(&point, &mut rng);
        point = tr.point;
        if it < config.warmup {
            nuts.eps = dual.learn(tr.accept_stat);
            if let Some(&(_, end)) = windows.iter().find(|&&(s, e)| it >= s && it < e) {
                estimator.add(&point.q);
                if it + 1 == end {
                    nuts.inv_metric = estimator.regularized();
                    estimator.reset();
                    nuts.init_stepsize(&point, &mut rng)?;
                    dual.restart(nuts.eps);
                }
            }
            if it + 1 == config.warmup {
                nuts.eps = dual.final_stepsize();
            }
            continue;
        }
        if tr.divergent {
            out.divergences += 1;
        }
        if (it - config.warmup) % config.thin == config.thin - 1 {
            out.stats.push(DrawStats {
                lp: point.lp,
                accept_stat: tr.accept_stat,
                tree_depth: tr.depth,
                n_leapfrog: tr.n_leapfrog,
                divergent: tr.divergent,
            });
            out.draws.push(point.q.clone());
        }
    }
    out.step_size = nuts.eps;
    out.inv_metric = nuts.inv_metric;
    Ok(out)
}

/// Runs `config.chains` independent chains against `target`.
///
/// Chains run concurrently; chain `c` uses stream `c + 1` of a ChaCha8
/// generator seeded with `config.seed`, so output does not depend on
/// scheduling.
pub fn sample<T: LogDensity + ?Sized>(target: &T, config: &SamplerConfig) -> Result<Vec<RawChain>> {
    config.validate()?;
    (0..config.chains).into_par_iter().map(|c| run_chain(target, config, c)).collect()
}

/// Samples the posterior of `model` and records constrained draws and
/// pointwise log-likelihoods.
pub fn fit(model: &Model, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    let layout = model.layout();
    let chains: Result<Vec<ChainDraws>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let raw = run_chain(model, config, c)?;
            let mut values = Vec::with_capacity(raw.draws.len());
            let mut loglik = Vec::with_capacity(raw.draws.len());
            for u in &raw.draws {
                values.push(layout.constrained_values(u));
                loglik.push(model.log_likelihood_unconstrained(u)?.1);
            }
            Ok(ChainDraws {
                values,
                loglik,
                stats: raw.stats,
                step_size: raw.step_size,
                inv_metric: raw.inv_metric,
                divergences: raw.divergences,
                post_warmup: raw.post_warmup,
            })
        })
        .collect();
    Ok(PosteriorDraws::new(layout.names(), chains?, config.seed))
}
