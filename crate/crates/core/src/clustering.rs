//! Bayes-optimal K-means clustering of posterior surface draws.
//!
//! Labels are 1-based throughout: `labels[i] == k` means location `i`
//! belongs to the cluster with center `centers[k - 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    /// Ascending.
    pub centers: Vec<f64>,
    /// Row `i` gives the probability of each cluster for location `i`.
    pub assignment_probs: Vec<Vec<f64>>,
    pub posterior_means: Vec<f64>,
    /// Posterior expected K-means loss of the reported partition.
    pub loss: f64,
}

fn check_draws<R: AsRef<[f64]>>(draws: &[R]) -> Result<usize> {
    let q = draws.first().map(|r| r.as_ref().len()).unwrap_or(0);
    if draws.iter().any(|r| r.as_ref().len() != q) {
        return invalid("ragged draw matrix");
    }
    if draws.iter().any(|r| r.as_ref().iter().any(|v| !v.is_finite())) {
        return invalid("draws must be finite");
    }
    Ok(q)
}

/// Per-location mean over draws (rows are draws).
pub fn posterior_means<R: AsRef<[f64]>>(draws: &[R]) -> Vec<f64> {
    let q = draws.first().map(|r| r.as_ref().len()).unwrap_or(0);
    let s = draws.len() as f64;
    let mut m = vec![0.0; q];
    for r in draws {
        for (mi, v) in m.iter_mut().zip(r.as_ref()) {
            *mi += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= s);
    m
}

fn nearest(x: f64, centers: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = (x - centers[0]).powi(2);
    for (k, c) in centers.iter().enumerate().skip(1) {
        let d = (x - c).powi(2);
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

/// Cluster means in index order; `None` if a cluster is empty.
fn centers_of(values: &[f64], labels: &[usize], k: usize) -> Option<Vec<f64>> {
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (v, &l) in values.iter().zip(labels) {
        sum[l] += v;
        count[l] += 1;
    }
    if count.contains(&0) {
        return None;
    }
    Some(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
}

fn kmeans_pp<R: Rng>(values: &[f64], k: usize, rng: &mut R) -> Option<Vec<f64>> {
    let mut centers = vec![values[rng.random_range(0..values.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = values.iter().map(|&x| (x - centers[nearest(x, &centers)]).powi(2)).collect();
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = values.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.push(values[pick]);
    }
    Some(centers)
}

/// One k-means++ seeded Lloyd run; `None` when a cluster empties.
fn lloyd<R: Rng>(values: &[f64], k: usize, rng: &mut R) -> Option<(Vec<usize>, Vec<f64>)> {
    let mut centers = kmeans_pp(values, k, rng)?;
    let mut labels: Vec<usize> = values.iter().map(|&x| nearest(x, &centers)).collect();
    for _ in 0..1000 {
        centers = centers_of(values, &labels, k)?;
        let next: Vec<usize> = values.iter().map(|&x| nearest(x, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    let centers = centers_of(values, &labels, k)?;
    Some((labels, centers))
}

fn sse(values: &[f64], labels: &[usize], centers: &[f64]) -> f64 {
    values.iter().zip(labels).map(|(v, &l)| (v - centers[l]).powi(2)).sum()
}

/// K-means on the posterior means of `draws` (S×q, rows are draws), best
/// of `restarts` k-means++ seeded Lloyd runs. Centers are returned sorted
/// and labels follow that order.
pub fn cluster_surface<R: AsRef<[f64]>>(draws: &[R], k: usize, restarts: usize, seed: u64) -> Result<ClusterResult> {
    let q = check_draws(draws)?;
    if draws.len() < 2 {
        return invalid("need at least two draws");
    }
    if k == 0 || q < k {
        return Err(Error::InvalidArgument(format!("need 1 <= K <= q, got K={k}, q={q}")));
    }
    if restarts == 0 {
        return invalid("restarts must be at least 1");
    }
    let means = posterior_means(draws);
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        if let Some((labels, centers)) = lloyd(&means, k, &mut rng) {
            let loss = sse(&means, &labels, &centers);
            if best.as_ref().is_none_or(|b| loss < b.0) {
                best = Some((loss, labels, centers));
            }
        }
    }
    let (_, labels, centers) =
        best.ok_or_else(|| Error::DegenerateInput(format!("every restart left a cluster empty with K={k}")))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let centers: Vec<f64> = order.iter().map(|&o| centers[o]).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| rank[l] + 1).collect();
    let assignment_probs = assignment_probability(draws, &centers)?;
    let loss = expected_kmeans_loss(draws, &labels, &centers)?;
    Ok(ClusterResult { labels, centers, assignment_probs, posterior_means: means, loss })
}

/// Fraction of draws in which each location is nearest to each center;
/// exact ties go to the lower cluster index.
pub fn assignment_probability<R: AsRef<[f64]>>(draws: &[R], centers: &[f64]) -> Result<Vec<Vec<f64>>> {
    let q = check_draws(draws)?;
    if centers.is_empty() || draws.is_empty() {
        return invalid("need at least one center and one draw");
    }
    let k = centers.len();
    let mut counts = vec![vec![0usize; k]; q];
    for r in draws {
        for (i, &x) in r.as_ref().iter().enumerate() {
            counts[i][nearest(x, centers)] += 1;
        }
    }
    let s = draws.len() as f64;
    Ok(counts.into_iter().map(|row| row.into_iter().map(|c| c as f64 / s).collect()).collect())
}

/// Posterior expected K-means loss: sum over locations of the mean over
/// draws of the squared distance to the assigned center.
pub fn expected_kmeans_loss<R: AsRef<[f64]>>(draws: &[R], labels: &[usize], centers: &[f64]) -> Result<f64> {
    let q = check_draws(draws)?;
    if labels.len() != q {
        return invalid("one label per location required");
    }
    if labels.iter().any(|&l| l == 0 || l > centers.len()) {
        return invalid("labels must lie in 1..=K");
    }
    let s = draws.len() as f64;
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        let c = centers[l - 1];
        total += draws.iter().map(|r| (r.as_ref()[i] - c).powi(2)).sum::<f64>() / s;
    }
    Ok(total)
}
