//! Warmup adaptation: dual averaging of the step size and windowed
//! estimation of a diagonal inverse metric.

#[derive(Debug, Clone)]
pub(crate) struct DualAveraging {
    delta: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(delta: f64) -> Self {
        DualAveraging { delta, gamma: 0.05, t0: 10.0, kappa: 0.75, mu: 0.0, counter: 0.0, s_bar: 0.0, x_bar: 0.0 }
    }

    pub fn restart(&mut self, eps: f64) {
        self.mu = (10.0 * eps).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    pub fn learn(&mut self, accept_stat: f64) -> f64 {
        self.counter += 1.0;
        let stat = accept_stat.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    pub fn final_stepsize(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator for per-coordinate variances.
#[derive(Debug, Clone)]
pub(crate) struct VarianceEstimator {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl VarianceEstimator {
    pub fn new(dim: usize) -> Self {
        VarianceEstimator { n: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, q: &[f64]) {
        self.n += 1.0;
        for ((m, s), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
            let d = x - *m;
            *m += d / self.n;
            *s += d * (x - *m);
        }
    }

    /// Sample variance shrunk towards 1e-3.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n;
        self.m2
            .iter()
            .map(|s| {
                let var = if n > 1.0 { s / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        self.n = 0.0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Metric windows `[start, end)` in warmup iteration indices: an initial
/// step-size-only buffer (15%), doubling windows over the middle 75%, and
/// a final step-size-only buffer (10%).
pub(crate) fn metric_windows(warmup: usize) -> Vec<(usize, usize)> {
    if warmup < 20 {
        return Vec::new();
    }
    let init = (0.15 * warmup as f64) as usize;
    let term = (0.10 * warmup as f64) as usize;
    let stop = warmup - term;
    let mut windows = Vec::new();
    let mut start = init;
    let mut size = 25usize.min(stop - init);
    while start < stop {
        let mut end = (start + size).min(stop);
        if end + 2 * size > stop {
            end = stop;
        }
        windows.push((start, end));
        start = end;
        size *= 2;
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_cover_the_middle() {
        let w = metric_windows(1000);
        assert_eq!(w.first().unwrap().0, 150);
        assert_eq!(w.last().unwrap().1, 900);
        for pair in w.windows(2) {
            assert_eq!(pair[0].1, pair[1].0);
        }
        assert_eq!(w, vec![(150, 175), (175, 225), (225, 325), (325, 900)]);
        assert!(metric_windows(10).is_empty());
        assert_eq!(metric_windows(40), vec![(6, 36)]);
    }

    #[test]
    fn dual_averaging_moves_towards_target() {
        let mut da = DualAveraging::new(0.8);
        da.restart(1.0);
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = da.learn(0.2);
        }
        assert!(eps < 1.0);
        let mut up = DualAveraging::new(0.8);
        up.restart(1.0);
        let mut eps2 = 1.0;
        for _ in 0..50 {
            eps2 = up.learn(1.0);
        }
        assert!(eps2 > eps);
        assert!(up.final_stepsize().is_finite());
    }

    #[test]
    fn variance_estimator_matches_two_pass() {
        let xs = [[1.0, 2.0], [3.0, -1.0], [2.0, 0.5], [7.0, 0.0]];
        let mut v = VarianceEstimator::new(2);
        for x in &xs {
            v.add(x);
        }
        let n = xs.len() as f64;
        for d in 0..2 {
            let mean = xs.iter().map(|x| x[d]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let expect = n / (n + 5.0) * var + 1e-3 * 5.0 / (n + 5.0);
            assert!((v.regularized()[d] - expect).abs() < 1e-12);
        }
    }
}
