use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Knots `0 = s_0 < s_1 < ... < s_k` of the piecewise-constant baseline.
///
/// Interval `l` is `(s_l, s_{l+1}]`; time zero is assigned to interval 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    knots: Vec<f64>,
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(knots: Vec<f64>) -> Result<Self> {
        TimeGrid::from_knots(knots)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.knots
    }
}

impl TimeGrid {
    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return invalid("a time grid needs at least two knots");
        }
        if knots[0] != 0.0 {
            return invalid("first knot must be 0");
        }
        if knots.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return invalid("knots must be finite and strictly increasing");
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of intervals `k`.
    pub fn k(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn end(&self) -> f64 {
        self.knots[self.k()]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.knots.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index `l` with `t` in `(s_l, s_{l+1}]`.
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.end() {
            return Err(Error::OutOfRange(format!(
                "time {t} outside grid [0, {}]",
                self.end()
            )));
        }
        // first knot >= t, among s_1..s_k
        let idx = self.knots[1..].partition_point(|&s| s < t);
        Ok(idx.min(self.k() - 1))
    }

    /// Midpoint of each interval.
    pub fn midpoints(&self) -> Vec<f64> {
        self.knots.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Equally spaced grid with `k` intervals on `[0, max_time]`.
pub fn build_time_grid(max_time: f64, k: usize) -> Result<TimeGrid> {
    if !(max_time.is_finite() && max_time > 0.0) {
        return invalid(format!("max_time must be positive, got {max_time}"));
    }
    if k == 0 {
        return invalid("k must be at least 1");
    }
    let step = max_time / k as f64;
    let mut knots: Vec<f64> = (0..=k).map(|l| l as f64 * step).collect();
    knots[k] = max_time;
    TimeGrid::from_knots(knots)
}

/// Integral of the step function with the given per-interval `rates` over `[0, t]`.
pub fn piecewise_cum_hazard(grid: &TimeGrid, rates: &[f64], t: f64) -> Result<f64> {
    if rates.len() != grid.k() {
        return invalid(format!("expected {} rates, got {}", grid.k(), rates.len()));
    }
    let l = grid.interval_of(t)?;
    let s = grid.knots();
    let full: f64 = (0..l).map(|r| rates[r] * (s[r + 1] - s[r])).sum();
    Ok(full + rates[l] * (t - s[l]).max(0.0))
}

/// Prior correlation between `lambda_l` and `lambda_{l+q}` under the
/// multiplicative gamma process, given `a0` and `kappa`.
///
/// Intervals are indexed from 0, so `lambda_0 = psi_0` and valid requests
/// satisfy `1 <= l` and `l + q <= k - 1`.
pub fn mgp_prior_correlation(a0: f64, kappa: f64, grid: &TimeGrid, l: usize, q: usize) -> Result<f64> {
    if !(a0 > 0.0 && kappa > 0.0) {
        return invalid("a0 and kappa must be positive");
    }
    if l == 0 || l + q >= grid.k() {
        return Err(Error::OutOfRange(format!(
            "need 1 <= l and l + q <= {}, got l={l}, q={q}",
            grid.k() - 1
        )));
    }
    if q == 0 {
        return Ok(1.0);
    }
    let widths = grid.widths();
    // accumulate in log space; the products overflow for fine grids otherwise
    let log_prod = |upto: usize| -> f64 { widths[1..=upto].iter().map(|d| (d / kappa).ln_1p()).sum() };
    let term = |lp: f64| (1.0 + a0) * lp.exp() - a0;
    let num = term(log_prod(l));
    let den = term(log_prod(l + q));
    Ok((num / den).sqrt())
}

/// Continuous-time limit of [`mgp_prior_correlation`] for hazards at
/// fixed times `t1 < t2`.
pub fn mgp_limit_correlation(a0: f64, kappa: f64, t1: f64, t2: f64) -> f64 {
    let term = |t: f64| (1.0 + a0) * (t / kappa).exp() - a0;
    (term(t1) / term(t2)).sqrt()
}
