//! Dynamic-trajectory Hamiltonian transitions with multinomial sampling
//! and a diagonal metric.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LogDensity;
use crate::error::{Error, Result};

/// Energy error beyond which a trajectory is flagged divergent.
pub(crate) const MAX_DELTA_H: f64 = 1000.0;

/// One leapfrog step with unit metric.
///
/// `grad_fn` returns the gradient of the log density. A non-finite
/// position, momentum or gradient is reported as [`Error::Diverged`].
pub fn leapfrog<F>(u: &[f64], momentum: &[f64], step: f64, mut grad_fn: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if u.len() != momentum.len() {
        return Err(Error::InvalidArgument("position and momentum lengths differ".into()));
    }
    if !step.is_finite() || u.iter().chain(momentum).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("leapfrog inputs must be finite".into()));
    }
    let mut q = u.to_vec();
    let mut p = momentum.to_vec();
    let mut grad = grad_fn(&q)?;
    if grad.len() != q.len() {
        return Err(Error::InvalidArgument("gradient length mismatch".into()));
    }
    let unit = vec![1.0; q.len()];
    step_in_place(&mut q, &mut p, &mut grad, step, &unit, |x, g| {
        let new = grad_fn(x)?;
        g.copy_from_slice(&new);
        Ok(0.0)
    })?;
    if q.iter().chain(&p).chain(&grad).any(|v| !v.is_finite()) {
        return Err(Error::Diverged("non-finite leapfrog state".into()));
    }
    Ok((q, p))
}

fn step_in_place<F>(q: &mut [f64], p: &mut [f64], grad: &mut [f64], eps: f64, inv_metric: &[f64], mut eval: F) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    for (pi, gi) in p.iter_mut().zip(grad.iter()) {
        *pi += 0.5 * eps * gi;
    }
    for ((qi, pi), mi) in q.iter_mut().zip(p.iter()).zip(inv_metric) {
        *qi += eps * mi * pi;
    }
    let lp = eval(q, grad)?;
    for (pi, gi) in p.iter_mut().zip(grad.iter()) {
        *pi += 0.5 * eps * gi;
    }
    Ok(lp)
}

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub lp: f64,
}

impl Point {
    pub fn at<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Result<Self> {
        let mut grad = vec![0.0; q.len()];
        let lp = target.log_density_grad(&q, &mut grad)?;
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged("non-finite log density".into()));
        }
        let p = vec![0.0; q.len()];
        Ok(Point { q, p, grad, lp })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Transition {
    pub point: Point,
    pub accept_stat: f64,
    pub depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
}

struct TreeCtx {
    h0: f64,
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0
}

pub(crate) struct Nuts<'a, T: LogDensity + ?Sized> {
    pub target: &'a T,
    pub eps: f64,
    pub inv_metric: Vec<f64>,
    pub max_depth: usize,
}

impl<'a, T: LogDensity + ?Sized> Nuts<'a, T> {
    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(pi, mi)| pi * pi * mi).sum::<f64>()
    }

    fn hamiltonian(&self, z: &Point) -> f64 {
        -z.lp + self.kinetic(&z.p)
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(pi, mi)| pi * mi).collect()
    }

    fn sample_momentum<R: Rng>(&self, z: &mut Point, rng: &mut R) {
        for (pi, mi) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *pi = n / mi.sqrt();
        }
    }

    /// Returns false when the new point cannot be evaluated.
    fn evolve(&self, z: &mut Point, eps: f64) -> bool {
        let target = self.target;
        let res = step_in_place(&mut z.q, &mut z.p, &mut z.grad, eps, &self.inv_metric, |q, g| {
            target.log_density_grad(q, g)
        });
        match res {
            Ok(lp) if lp.is_finite() => {
                z.lp = lp;
                true
            }
            _ => {
                z.lp = f64::NEG_INFINITY;
                false
            }
        }
    }

    /// Heuristic initial step size: double or halve until the one-step
    /// acceptance crosses 0.8.
    pub fn init_stepsize<R: Rng>(&mut self, z: &Point, rng: &mut R) -> Result<()> {
        let threshold = 0.8f64.ln();
        let trial = |this: &Self, rng: &mut R| {
            let mut w = z.clone();
            this.sample_momentum(&mut w, rng);
            let h0 = this.hamiltonian(&w);
            let h = if this.evolve(&mut w, this.eps) { this.hamiltonian(&w) } else { f64::INFINITY };
            let h = if h.is_nan() { f64::INFINITY } else { h };
            h0 - h
        };
        let delta = trial(self, rng);
        let direction = if delta > threshold { 1 } else { -1 };
        loop {
            let delta = trial(self, rng);
            if direction == 1 && !(delta > threshold) {
                break;
            }
            if direction == -1 && !(delta < threshold) {
                break;
            }
            self.eps = if direction == 1 { 2.0 * self.eps } else { 0.5 * self.eps };
            if self.eps > 1e7 {
                return Err(Error::Numerical("step size diverged to infinity during initialization".into()));
            }
            if self.eps == 0.0 {
                return Err(Error::Numerical("step size collapsed to zero during initialization".into()));
            }
        }
        Ok(())
    }

    pub fn transition<R: Rng>(&self, start: &Point, rng: &mut R) -> Transition {
        let mut z = start.clone();
        self.sample_momentum(&mut z, rng);
        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();

        let p_sharp = self.p_sharp(&z.p);
        let mut p_fwd_fwd = z.p.clone();
        let mut p_sharp_fwd_fwd = p_sharp.clone();
        let mut p_fwd_bck = z.p.clone();
        let mut p_sharp_fwd_bck = p_sharp.clone();
        let mut p_bck_fwd = z.p.clone();
        let mut p_sharp_bck_fwd = p_sharp.clone();
        let mut p_bck_bck = z.p.clone();
        let mut p_sharp_bck_bck = p_sharp;
        let mut rho = z.p.clone();

        let mut log_sum_weight = 0.0;
        let mut ctx = TreeCtx { h0: self.hamiltonian(&z), n_leapfrog: 0, sum_metro_prob: 0.0, divergent: false };
        let d = z.q.len();
        let mut depth = 0;

        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; d];
            let mut rho_bck = vec![0.0; d];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if rng.random::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_bck);
                p_sharp_bck_fwd.copy_from_slice(&p_sharp_fwd_bck);
                self.build_tree(
                    depth,
                    &mut z_fwd,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    1.0,
                    &mut lsw_subtree,
                    &mut ctx,
                    rng,
                )
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_fwd);
                p_sharp_fwd_bck.copy_from_slice(&p_sharp_bck_fwd);
                self.build_tree(
                    depth,
                    &mut z_bck,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    -1.0,
                    &mut lsw_subtree,
                    &mut ctx,
                    rng,
                )
            };
            if !valid {
                break;
            }
            depth += 1;

            if lsw_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else {
                let accept = (lsw_subtree - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    z_sample.clone_from(&z_propose);
                }
            }
            log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

            rho = add(&rho_bck, &rho_fwd);
            let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            let ext = add(&rho_bck, &p_fwd_bck);
            persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &ext);
            let ext = add(&rho_fwd, &p_bck_fwd);
            persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &ext);
            if !persist {
                break;
            }
        }

        let accept_stat = if ctx.n_leapfrog > 0 { ctx.sum_metro_prob / ctx.n_leapfrog as f64 } else { 0.0 };
        Transition { point: z_sample, accept_stat, depth, n_leapfrog: ctx.n_leapfrog, divergent: ctx.divergent }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree<R: Rng>(
        &self,
        depth: usize,
        z: &mut Point,
        z_propose: &mut Point,
        p_sharp_beg: &mut [f64],
        p_sharp_end: &mut [f64],
        rho: &mut [f64],
        p_beg: &mut [f64],
        p_end: &mut [f64],
        sign: f64,
        log_sum_weight: &mut f64,
        ctx: &mut TreeCtx,
        rng: &mut R,
    ) -> bool {
        if depth == 0 {
            let ok = self.evolve(z, sign * self.eps);
            ctx.n_leapfrog += 1;
            let mut h = if ok { self.hamiltonian(z) } else { f64::INFINITY };
            if h.is_nan() {
                h = f64::INFINITY;
            }
            if h - ctx.h0 > MAX_DELTA_H {
                ctx.divergent = true;
            }
            *log_sum_weight = log_sum_exp(*log_sum_weight, ctx.h0 - h);
            ctx.sum_metro_prob += if ctx.h0 - h > 0.0 { 1.0 } else { (ctx.h0 - h).exp() };
            z_propose.clone_from(z);
            let sharp = self.p_sharp(&z.p);
            p_sharp_beg.copy_from_slice(&sharp);
            p_sharp_end.copy_from_slice(&sharp);
            for (r, pi) in rho.iter_mut().zip(&z.p) {
                *r += pi;
            }
            p_beg.copy_from_slice(&z.p);
            p_end.copy_from_slice(&z.p);
            return !ctx.divergent;
        }

        let d = z.q.len();
        let mut lsw_init = f64::NEG_INFINITY;
        let mut p_init_end = vec![0.0; d];
        let mut p_sharp_init_end = vec![0.0; d];
        let mut rho_init = vec![0.0; d];
        let valid_init = self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            sign,
            &mut lsw_init,
            ctx,
            rng,
        );
        if !valid_init {
            return false;
        }

        let mut z_propose_final = z.clone();
        let mut lsw_final = f64::NEG_INFINITY;
        let mut p_final_beg = vec![0.0; d];
        let mut p_sharp_final_beg = vec![0.0; d];
        let mut rho_final = vec![0.0; d];
        let valid_final = self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            sign,
            &mut lsw_final,
            ctx,
            rng,
        );
        if !valid_final {
            return false;
        }

        let lsw_subtree = log_sum_exp(lsw_init, lsw_final);
        *log_sum_weight = log_sum_exp(*log_sum_weight, lsw_subtree);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if rng.random::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }

        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        let ext = add(&rho_init, &p_final_beg);
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &ext);
        let ext = add(&rho_final, &p_init_end);
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &ext);
        persist
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_grad(q: &[f64]) -> Result<Vec<f64>> {
        Ok(q.iter().map(|v| -v).collect())
    }

    fn energy(q: &[f64], p: &[f64]) -> f64 {
        0.5 * q.iter().map(|v| v * v).sum::<f64>() + 0.5 * p.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn reversible() {
        let q0 = vec![0.3, -1.2, 2.0];
        let p0 = vec![1.0, 0.5, -0.7];
        let aniso = |q: &[f64]| -> Result<Vec<f64>> { Ok(vec![-q[0] * 4.0, -q[1].powi(3), -q[2].sin()]) };
        let (q1, p1) = leapfrog(&q0, &p0, 0.1, aniso).unwrap();
        let neg: Vec<f64> = p1.iter().map(|v| -v).collect();
        let (q2, p2) = leapfrog(&q1, &neg, 0.1, aniso).unwrap();
        for i in 0..3 {
            assert!((q2[i] - q0[i]).abs() < 1e-10);
            assert!((-p2[i] - p0[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_error_is_second_order() {
        let q0 = vec![1.0, -0.5];
        let p0 = vec![0.3, 0.8];
        let h0 = energy(&q0, &p0);
        let err = |step: f64| {
            // integrate to a fixed time so the global error is compared
            let n = (0.8 / step).round() as usize;
            let (mut q, mut p) = (q0.clone(), p0.clone());
            for _ in 0..n {
                (q, p) = leapfrog(&q, &p, step, quad_grad).unwrap();
            }
            (energy(&q, &p) - h0).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 3.5 && ratio < 4.5, "{ratio}");
    }

    #[test]
    fn zero_gradient_is_straight_line() {
        let (q, p) = leapfrog(&[1.0, 2.0], &[0.5, -1.0], 0.2, |q| Ok(vec![0.0; q.len()])).unwrap();
        assert!((q[0] - 1.1).abs() < 1e-15 && (q[1] - 1.8).abs() < 1e-15);
        assert_eq!(p, vec![0.5, -1.0]);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let r = leapfrog(&[1.0], &[1.0], 0.1, |_| Ok(vec![f64::NAN]));
        assert!(matches!(r, Err(Error::Diverged(_))));
        assert!(leapfrog(&[f64::NAN], &[1.0], 0.1, quad_grad).is_err());
    }

    #[test]
    fn log_sum_exp_handles_infinities() {
        assert_eq!(log_sum_exp(f64::NEG_INFINITY, 1.0), 1.0);
        assert!((log_sum_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
