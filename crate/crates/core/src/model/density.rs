use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::{digamma, gamma_ur, ln_gamma};

use super::layout::{sigmoid, ParamLayout, SurfaceSlots};
use super::{Dataset, GpApprox, Hyperparameters, ModelSpec, ParameterState, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::spatial::{
    cholesky_with_jitter, hsgp_basis, matern32_dlengthscale, matern32_spectral_density, HsgpBasis,
    MaternParams,
};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Spatial representation evaluated at the observed coordinates.
#[derive(Debug, Clone)]
pub(crate) enum ObservedBasis {
    Hsgp(HsgpBasis),
    Exact { dist: DMatrix<f64> },
}

/// A competing-risks model bound to a dataset and time grid, with all
/// per-fit precomputation (interval membership, exposures, spatial basis).
#[derive(Debug, Clone)]
pub struct Model {
    data: Dataset,
    spec: ModelSpec,
    hyper: Hyperparameters,
    grid: TimeGrid,
    layout: ParamLayout,
    widths: Vec<f64>,
    interval: Vec<usize>,
    partial: Vec<f64>,
    /// `event_counts[j][l]`: type-`j+1` events in interval `l`.
    event_counts: Vec<Vec<f64>>,
    basis: Option<ObservedBasis>,
    /// `log P(ell <= ell_max)` under the untruncated inverse gamma.
    ell_log_mass: f64,
}

/// Cached per-surface quantities for the backward pass.
enum SurfaceCache {
    Hsgp { sqrt_s: Vec<f64>, dlog_s_dell: Vec<f64> },
    Exact { chol: Cholesky<f64, Dyn>, dk: DMatrix<f64> },
}

struct SurfaceEval {
    theta: DVector<f64>,
    tau: f64,
    ell: f64,
    cache: SurfaceCache,
}

impl Model {
    /// Coordinates in `dataset` are used as given; normalize them first for
    /// the low-rank basis.
    pub fn new(data: Dataset, spec: ModelSpec, hyper: Hyperparameters, grid: TimeGrid) -> Result<Self> {
        hyper.validate()?;
        if grid.k() != spec.intervals {
            return invalid(format!(
                "grid has {} intervals but the model specifies {}",
                grid.k(),
                spec.intervals
            ));
        }
        let n = data.n();
        let mut interval = Vec::with_capacity(n);
        let mut partial = Vec::with_capacity(n);
        let mut event_counts = vec![vec![0.0; grid.k()]; data.n_risks()];
        for i in 0..n {
            let t = data.times()[i];
            let l = grid.interval_of(t)?;
            interval.push(l);
            partial.push(t - grid.knots()[l]);
            let e = data.events()[i] as usize;
            if e > 0 {
                event_counts[e - 1][l] += 1.0;
            }
        }
        let basis = if spec.spatial.has_intercept() {
            Some(match spec.gp {
                GpApprox::Hsgp(cfg) => ObservedBasis::Hsgp(hsgp_basis(data.coords(), &cfg)?),
                GpApprox::Exact => {
                    let c = data.coords();
                    let dist = DMatrix::from_fn(n, n, |a, b| {
                        ((c[a][0] - c[b][0]).powi(2) + (c[a][1] - c[b][1]).powi(2)).sqrt()
                    });
                    ObservedBasis::Exact { dist }
                }
            })
        } else {
            None
        };
        let n_weights = match &basis {
            Some(ObservedBasis::Hsgp(b)) => b.m_basis(),
            Some(ObservedBasis::Exact { .. }) => n,
            None => 0,
        };
        let layout = ParamLayout::new(
            data.n_risks(),
            data.p(),
            data.w().is_some(),
            grid.k(),
            spec.spatial,
            n_weights,
            hyper.ell_max,
        )?;
        let ell_log_mass = gamma_ur(hyper.a_ell, hyper.b_ell / hyper.ell_max).ln();
        Ok(Self {
            widths: grid.widths(),
            data,
            spec,
            hyper,
            grid,
            layout,
            interval,
            partial,
            event_counts,
            basis,
            ell_log_mass,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }
    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }
    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }
    /// Low-rank basis at the observed sites, when the model uses one.
    pub fn hsgp_basis(&self) -> Option<&HsgpBasis> {
        match &self.basis {
            Some(ObservedBasis::Hsgp(b)) => Some(b),
            _ => None,
        }
    }

    fn eval_surface(&self, u: &[f64], slots: &SurfaceSlots) -> Result<SurfaceEval> {
        let tau = u[slots.log_tau].exp();
        let ell = self.layout.ell_max() * sigmoid(u[slots.logit_ell]);
        let z = &u[slots.z.clone()];
        match self.basis.as_ref().expect("surface slots imply a basis") {
            ObservedBasis::Hsgp(b) => {
                let unit = MaternParams { tau: 1.0, lengthscale: ell };
                let mut sqrt_s = Vec::with_capacity(z.len());
                let mut dlog_s_dell = Vec::with_capacity(z.len());
                for &w2 in b.eigvals() {
                    sqrt_s.push(tau * matern32_spectral_density(w2, unit).sqrt());
                    let inner = 3.0 / (ell * ell) + w2;
                    dlog_s_dell.push(-3.0 / ell + 15.0 / (ell * ell * ell * inner));
                }
                let scaled = DVector::from_iterator(z.len(), sqrt_s.iter().zip(z).map(|(s, zi)| s * zi));
                let theta = b.phi() * scaled;
                Ok(SurfaceEval { theta, tau, ell, cache: SurfaceCache::Hsgp { sqrt_s, dlog_s_dell } })
            }
            ObservedBasis::Exact { dist } => {
                let unit = MaternParams { tau: 1.0, lengthscale: ell };
                let k = dist.map(|r| crate::spatial::matern32(r, unit).unwrap_or(0.0));
                let dk = dist.map(|r| matern32_dlengthscale(r, unit));
                let chol = cholesky_with_jitter(&k, 1.0)?;
                let theta = chol.l() * DVector::from_column_slice(z) * tau;
                Ok(SurfaceEval { theta, tau, ell, cache: SurfaceCache::Exact { chol, dk } })
            }
        }
    }

    /// Accumulates the gradient of a surface given `d logp / d theta`.
    fn backprop_surface(&self, s: &SurfaceEval, g_theta: &DVector<f64>, u: &[f64], slots: &SurfaceSlots, grad: &mut [f64]) {
        let z = &u[slots.z.clone()];
        let dell_du = s.ell * (1.0 - s.ell / self.layout.ell_max());
        match (&s.cache, self.basis.as_ref().unwrap()) {
            (SurfaceCache::Hsgp { sqrt_s, dlog_s_dell }, ObservedBasis::Hsgp(b)) => {
                let h = b.phi().tr_mul(g_theta);
                let mut d_logtau = 0.0;
                let mut d_ell = 0.0;
                for m in 0..z.len() {
                    let t = sqrt_s[m] * h[m];
                    grad[slots.z.start + m] += t;
                    d_logtau += t * z[m];
                    d_ell += 0.5 * t * z[m] * dlog_s_dell[m];
                }
                grad[slots.log_tau] += d_logtau;
                grad[slots.logit_ell] += d_ell * dell_du;
            }
            (SurfaceCache::Exact { chol, dk }, ObservedBasis::Exact { .. }) => {
                let l = chol.l();
                let a = l.tr_mul(g_theta);
                for m in 0..z.len() {
                    grad[slots.z.start + m] += s.tau * a[m];
                }
                grad[slots.log_tau] += g_theta.dot(&s.theta);
                // d theta / d ell = tau * L * Phi(L^-1 dK L^-T) z
                let x = l.solve_lower_triangular(dk).expect("triangular solve");
                let mmat = l.solve_lower_triangular(&x.transpose()).expect("triangular solve");
                let n = z.len();
                let mut acc = 0.0;
                for col in 0..n {
                    let zc = z[col];
                    if zc == 0.0 {
                        continue;
                    }
                    acc += 0.5 * a[col] * mmat[(col, col)] * zc;
                    for row in col + 1..n {
                        acc += a[row] * mmat[(row, col)] * zc;
                    }
                }
                grad[slots.logit_ell] += s.tau * acc * dell_du;
            }
            _ => unreachable!("surface cache matches basis kind"),
        }
    }

    /// Log posterior on the unconstrained scale (including the Jacobian).
    /// Fills `grad` when given and `pointwise` log-likelihoods when given.
    pub(crate) fn eval(&self, u: &[f64], mut grad: Option<&mut [f64]>, pointwise: Option<&mut [f64]>) -> Result<f64> {
        if u.len() != self.dim() {
            return invalid(format!("expected {} parameters, got {}", self.dim(), u.len()));
        }
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let n = self.data.n();
        let k = self.grid.k();
        let w = self.data.w();
        let mut pointwise = pointwise;
        if let Some(pw) = pointwise.as_deref_mut() {
            pw.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut loglik = 0.0;

        for (j, slots) in self.layout.risks.iter().enumerate() {
            let risk_code = (j + 1) as u8;
            // baseline
            let mut log_lambda = Vec::with_capacity(k);
            let mut acc = 0.0;
            for l in 0..k {
                acc += u[slots.log_psi.start + l];
                log_lambda.push(acc);
            }
            let lambda: Vec<f64> = log_lambda.iter().map(|v| v.exp()).collect();
            let mut prefix = vec![0.0; k + 1];
            for l in 0..k {
                prefix[l + 1] = prefix[l] + lambda[l] * self.widths[l];
            }
            // linear predictor
            let mut eta = if self.data.p() > 0 {
                self.data.x() * DVector::from_column_slice(&u[slots.beta.clone()])
            } else {
                DVector::zeros(n)
            };
            let intercept = slots.intercept.as_ref().map(|s| self.eval_surface(u, s)).transpose()?;
            let slope = slots.slope.as_ref().map(|s| self.eval_surface(u, s)).transpose()?;
            if let Some(s) = &intercept {
                eta += &s.theta;
            }
            if let (Some(bw), Some(w)) = (slots.beta_w, w) {
                let bw = u[bw];
                for i in 0..n {
                    let slope_i = slope.as_ref().map_or(0.0, |s| s.theta[i]);
                    eta[i] += (slope_i + bw) * w[i];
                }
            }
            // likelihood contributions
            let mut g_eta = DVector::zeros(n);
            let mut weight_in = vec![0.0; k];
            let mut partial_exposure = vec![0.0; k];
            for i in 0..n {
                let l = self.interval[i];
                let e = eta[i].exp();
                let cum = prefix[l] + lambda[l] * self.partial[i];
                let mut li = -e * cum;
                let event = self.data.events()[i] == risk_code;
                if event {
                    li += log_lambda[l] + eta[i];
                }
                loglik += li;
                if let Some(pw) = pointwise.as_deref_mut() {
                    pw[i] += li;
                }
                g_eta[i] = f64::from(u8::from(event)) - e * cum;
                weight_in[l] += e;
                partial_exposure[l] += e * self.partial[i];
            }
            if let Some(g) = grad.as_deref_mut() {
                // d/d log lambda_l = D_l - lambda_l * A_l with A_l the weighted exposure
                let mut beyond = 0.0;
                let mut g_loglambda = vec![0.0; k];
                for l in (0..k).rev() {
                    let exposure = partial_exposure[l] + beyond * self.widths[l];
                    g_loglambda[l] = self.event_counts[j][l] - lambda[l] * exposure;
                    beyond += weight_in[l];
                }
                let mut suffix = 0.0;
                for l in (0..k).rev() {
                    suffix += g_loglambda[l];
                    g[slots.log_psi.start + l] += suffix;
                }
                if self.data.p() > 0 {
                    let gb = self.data.x().tr_mul(&g_eta);
                    for (c, idx) in slots.beta.clone().enumerate() {
                        g[idx] += gb[c];
                    }
                }
                if let (Some(bw), Some(w)) = (slots.beta_w, w) {
                    g[bw] += (0..n).map(|i| g_eta[i] * w[i]).sum::<f64>();
                }
                if let (Some(s), Some(ss)) = (&intercept, &slots.intercept) {
                    self.backprop_surface(s, &g_eta, u, ss, g);
                }
                if let (Some(s), Some(ss), Some(w)) = (&slope, &slots.slope, w) {
                    let g_slope = DVector::from_iterator(n, (0..n).map(|i| g_eta[i] * w[i]));
                    self.backprop_surface(s, &g_slope, u, ss, g);
                }
            }
        }

        let prior = self.log_prior_unconstrained(u, grad.as_deref_mut());
        let jac = self.layout.log_jacobian(u, grad.as_deref_mut());
        let total = loglik + prior + jac;
        if !total.is_finite() {
            return Err(Error::Diverged(format!("log density evaluated to {total}")));
        }
        if let Some(g) = grad.as_deref() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged("non-finite gradient".into()));
            }
        }
        Ok(total)
    }

    /// Prior on the natural scale, written in terms of unconstrained `u`,
    /// with gradient with respect to `u` (excluding the Jacobian).
    fn log_prior_unconstrained(&self, u: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let h = &self.hyper;
        let mut lp = 0.0;
        // coefficients
        if let Some(si) = self.layout.log_sigma2 {
            let log_s2 = u[si];
            let s2 = log_s2.exp();
            let mut sumsq = 0.0;
            let mut count = 0usize;
            for r in &self.layout.risks {
                for idx in r.beta.clone().chain(r.beta_w) {
                    sumsq += u[idx] * u[idx];
                    count += 1;
                    if let Some(g) = grad.as_deref_mut() {
                        g[idx] -= u[idx] / s2;
                    }
                }
            }
            lp += -0.5 * count as f64 * (LN_2PI + log_s2) - 0.5 * sumsq / s2;
            lp += h.a_sigma * h.b_sigma.ln() - ln_gamma(h.a_sigma) - (h.a_sigma + 1.0) * log_s2 - h.b_sigma / s2;
            if let Some(g) = grad.as_deref_mut() {
                g[si] += -0.5 * count as f64 + 0.5 * sumsq / s2 - (h.a_sigma + 1.0) + h.b_sigma / s2;
            }
        }
        // kappa
        let kappa = self.layout.log_kappa.map(|i| u[i].exp());
        if let Some(ki) = self.layout.log_kappa {
            let kap = u[ki].exp();
            lp += h.a1 * h.b1.ln() - ln_gamma(h.a1) - (h.a1 + 1.0) * u[ki] - h.b1 / kap;
            if let Some(g) = grad.as_deref_mut() {
                g[ki] += -(h.a1 + 1.0) + h.b1 / kap;
            }
        }
        for r in &self.layout.risks {
            let s0 = r.log_psi.start;
            let psi0 = u[s0].exp();
            lp += h.a0 * h.b0.ln() - ln_gamma(h.a0) + (h.a0 - 1.0) * u[s0] - h.b0 * psi0;
            if let Some(g) = grad.as_deref_mut() {
                g[s0] += (h.a0 - 1.0) - h.b0 * psi0;
            }
            if let Some(kap) = kappa {
                for l in 1..r.log_psi.len() {
                    let idx = s0 + l;
                    let a = kap / self.widths[l];
                    let log_psi = u[idx];
                    let psi = log_psi.exp();
                    lp += a * a.ln() - ln_gamma(a) + (a - 1.0) * log_psi - a * psi;
                    if let Some(g) = grad.as_deref_mut() {
                        g[idx] += (a - 1.0) - a * psi;
                        let d_a = a.ln() + 1.0 - digamma(a) + log_psi - psi;
                        g[self.layout.log_kappa.unwrap()] += d_a * a;
                    }
                }
            }
            for s in [&r.intercept, &r.slope].into_iter().flatten() {
                for idx in s.z.clone() {
                    lp += -0.5 * (LN_2PI + u[idx] * u[idx]);
                    if let Some(g) = grad.as_deref_mut() {
                        g[idx] -= u[idx];
                    }
                }
                let tau = u[s.log_tau].exp();
                lp += std::f64::consts::LN_2 - 0.5 * (LN_2PI + h.sigma_tau_sq.ln()) - 0.5 * tau * tau / h.sigma_tau_sq;
                let ell = self.layout.ell_max() * sigmoid(u[s.logit_ell]);
                lp += h.a_ell * h.b_ell.ln() - ln_gamma(h.a_ell) - (h.a_ell + 1.0) * ell.ln() - h.b_ell / ell
                    - self.ell_log_mass;
                if let Some(g) = grad.as_deref_mut() {
                    g[s.log_tau] -= tau * tau / h.sigma_tau_sq;
                    let d_ell = -(h.a_ell + 1.0) / ell + h.b_ell / (ell * ell);
                    g[s.logit_ell] += d_ell * ell * (1.0 - ell / self.layout.ell_max());
                }
            }
        }
        lp
    }

    #[cfg(test)]
    pub(crate) fn log_prior_unconstrained_for_test(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        self.log_prior_unconstrained(u, Some(grad))
    }

    /// Log posterior (with the change-of-variables term) at unconstrained `u`.
    pub fn log_posterior(&self, u: &[f64]) -> Result<f64> {
        self.eval(u, None, None)
    }

    /// Log posterior and its gradient at unconstrained `u`.
    pub fn log_posterior_grad(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.dim()];
        let v = self.eval(u, Some(&mut g), None)?;
        Ok((v, g))
    }

    /// Total and per-subject log-likelihood at a state.
    pub fn log_likelihood(&self, state: &ParameterState) -> Result<(f64, Vec<f64>)> {
        let u = self.layout.unconstrain(state)?;
        self.log_likelihood_unconstrained(&u)
    }

    pub(crate) fn log_likelihood_unconstrained(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut pw = vec![0.0; self.data.n()];
        self.eval(u, None, Some(&mut pw))?;
        Ok((pw.iter().sum(), pw))
    }

    /// Spatial intercept and slope surfaces of risk `j` (0-based) at the observed sites.
    pub fn surfaces(&self, state: &ParameterState, j: usize) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>)> {
        let u = self.layout.unconstrain(state)?;
        let slots = self
            .layout
            .risks
            .get(j)
            .ok_or_else(|| Error::InvalidArgument(format!("risk index {j} out of range")))?;
        let eval = |s: &Option<SurfaceSlots>| -> Result<Option<Vec<f64>>> {
            s.as_ref()
                .map(|s| self.eval_surface(&u, s).map(|e| e.theta.as_slice().to_vec()))
                .transpose()
        };
        Ok((eval(&slots.intercept)?, eval(&slots.slope)?))
    }
}

/// `x_i' beta_j + theta_0j(d_i) + (theta_1j(d_i) + beta_wj) w_i` for subject
/// `i` and 0-based risk `j`; spatial terms absent from the model contribute 0.
pub fn linear_predictor(model: &Model, state: &ParameterState, i: usize, j: usize) -> Result<f64> {
    let data = model.data();
    if i >= data.n() || j >= data.n_risks() {
        return invalid(format!("subject {i} or risk {j} out of range"));
    }
    let r = &state.risks[j];
    if r.beta.len() != data.p() {
        return invalid("coefficient length mismatch");
    }
    let (intercept, slope) = model.surfaces(state, j)?;
    let mut eta: f64 = (0..data.p()).map(|c| data.x()[(i, c)] * r.beta[c]).sum();
    eta += intercept.map_or(0.0, |s| s[i]);
    if let (Some(w), Some(bw)) = (data.w(), r.beta_w) {
        let slope_i = if model.spec().spatial.has_slope() { slope.map_or(0.0, |s| s[i]) } else { 0.0 };
        eta += (slope_i + bw) * w[i];
    }
    Ok(eta)
}

/// Total and pointwise log-likelihood.
pub fn log_likelihood(model: &Model, state: &ParameterState) -> Result<(f64, Vec<f64>)> {
    model.log_likelihood(state)
}

/// Log posterior (unconstrained scale, with Jacobian) and gradient.
pub fn log_posterior_grad(model: &Model, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    model.log_posterior_grad(u)
}

fn gamma_logpdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

fn inv_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Log prior density of a state on the natural scale. Lengthscales beyond
/// `ell_max` give `-inf`; nonpositive scale parameters are an error.
pub fn log_prior(state: &ParameterState, hyper: &Hyperparameters, grid: &TimeGrid) -> Result<f64> {
    hyper.validate()?;
    let widths = grid.widths();
    let bad = |what: &str, v: f64| Err(Error::InvalidState(format!("{what} must be positive, got {v}")));
    let mut lp = 0.0;
    let coefs: Vec<f64> = state
        .risks
        .iter()
        .flat_map(|r| r.beta.iter().copied().chain(r.beta_w))
        .collect();
    match state.sigma2 {
        Some(s2) if s2 > 0.0 => {
            for b in &coefs {
                lp += -0.5 * (LN_2PI + s2.ln()) - 0.5 * b * b / s2;
            }
            lp += inv_gamma_logpdf(s2, hyper.a_sigma, hyper.b_sigma);
        }
        Some(s2) => return bad("sigma2", s2),
        None if !coefs.is_empty() => return invalid("sigma2 is required when coefficients are present"),
        None => {}
    }
    if let Some(kap) = state.kappa {
        if !(kap > 0.0) {
            return bad("kappa", kap);
        }
        lp += inv_gamma_logpdf(kap, hyper.a1, hyper.b1);
    }
    let ell_log_mass = gamma_ur(hyper.a_ell, hyper.b_ell / hyper.ell_max).ln();
    for r in &state.risks {
        if r.psi.len() != grid.k() {
            return invalid("increment count does not match the grid");
        }
        for (l, &psi) in r.psi.iter().enumerate() {
            if !(psi > 0.0) {
                return bad("psi", psi);
            }
            if l == 0 {
                lp += gamma_logpdf(psi, hyper.a0, hyper.b0);
            } else {
                let kap = state.kappa.ok_or_else(|| Error::InvalidState("kappa missing".into()))?;
                let a = kap / widths[l];
                lp += gamma_logpdf(psi, a, a);
            }
        }
        for s in [&r.intercept, &r.slope].into_iter().flatten() {
            for z in &s.z {
                lp += -0.5 * (LN_2PI + z * z);
            }
            if !(s.tau > 0.0) {
                return bad("tau", s.tau);
            }
            if !(s.lengthscale > 0.0) {
                return bad("lengthscale", s.lengthscale);
            }
            if s.lengthscale >= hyper.ell_max {
                return Ok(f64::NEG_INFINITY);
            }
            lp += std::f64::consts::LN_2 - 0.5 * (LN_2PI + hyper.sigma_tau_sq.ln())
                - 0.5 * s.tau * s.tau / hyper.sigma_tau_sq;
            lp += inv_gamma_logpdf(s.lengthscale, hyper.a_ell, hyper.b_ell) - ell_log_mass;
        }
    }
    Ok(lp)
}
