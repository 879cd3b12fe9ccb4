use std::ops::Range;

use super::{ParameterState, RiskParams, SpatialMode, SurfaceParams};
use crate::error::{invalid, Error, Result};

/// Positions of one surface's parameters in the unconstrained vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSlots {
    pub z: Range<usize>,
    pub log_tau: usize,
    pub logit_ell: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskSlots {
    pub beta: Range<usize>,
    pub beta_w: Option<usize>,
    pub log_psi: Range<usize>,
    pub intercept: Option<SurfaceSlots>,
    pub slope: Option<SurfaceSlots>,
}

/// Maps between [`ParameterState`] and the flat unconstrained vector the
/// sampler works on.
///
/// Transforms: log for `psi`, `kappa`, `sigma2`, `tau`; scaled logit onto
/// `(0, ell_max)` for lengthscales; identity elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub risks: Vec<RiskSlots>,
    pub log_sigma2: Option<usize>,
    pub log_kappa: Option<usize>,
    dim: usize,
    ell_max: f64,
    n_weights: usize,
    p: usize,
    k: usize,
}

pub(crate) fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

impl ParamLayout {
    pub fn new(
        n_risks: usize,
        p: usize,
        has_w: bool,
        k: usize,
        spatial: SpatialMode,
        n_weights: usize,
        ell_max: f64,
    ) -> Result<Self> {
        if k == 0 || n_risks == 0 {
            return invalid("need at least one risk and one interval");
        }
        if spatial.has_slope() && !has_w {
            return invalid("spatial slopes require the slope covariate w");
        }
        if spatial.has_intercept() && n_weights == 0 {
            return invalid("spatial surfaces need at least one basis weight");
        }
        let mut next = 0usize;
        let mut take = |len: usize| {
            let r = next..next + len;
            next += len;
            r
        };
        let mut risks = Vec::with_capacity(n_risks);
        for _ in 0..n_risks {
            let beta = take(p);
            let beta_w = has_w.then(|| take(1).start);
            let log_psi = take(k);
            let mut surface = |on: bool| {
                on.then(|| SurfaceSlots {
                    z: take(n_weights),
                    log_tau: take(1).start,
                    logit_ell: take(1).start,
                })
            };
            let intercept = surface(spatial.has_intercept());
            let slope = surface(spatial.has_slope());
            risks.push(RiskSlots { beta, beta_w, log_psi, intercept, slope });
        }
        let has_coefs = p > 0 || has_w;
        let log_sigma2 = has_coefs.then(|| take(1).start);
        let log_kappa = (k > 1).then(|| take(1).start);
        Ok(Self {
            risks,
            log_sigma2,
            log_kappa,
            dim: next,
            ell_max,
            n_weights: if spatial.has_intercept() { n_weights } else { 0 },
            p,
            k,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn ell_max(&self) -> f64 {
        self.ell_max
    }
    pub fn n_weights(&self) -> usize {
        self.n_weights
    }

    /// Parameter names in vector order (natural-scale meaning). Indices are 1-based.
    pub fn names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.dim];
        for (j, r) in self.risks.iter().enumerate() {
            let j1 = j + 1;
            for (c, idx) in r.beta.clone().enumerate() {
                names[idx] = format!("beta[{j1},{}]", c + 1);
            }
            if let Some(idx) = r.beta_w {
                names[idx] = format!("beta_w[{j1}]");
            }
            for (l, idx) in r.log_psi.clone().enumerate() {
                names[idx] = format!("psi[{j1},{}]", l + 1);
            }
            for (tag, s) in [("0", &r.intercept), ("1", &r.slope)] {
                if let Some(s) = s {
                    for (m, idx) in s.z.clone().enumerate() {
                        names[idx] = format!("z{tag}[{j1},{}]", m + 1);
                    }
                    names[s.log_tau] = format!("tau{tag}[{j1}]");
                    names[s.logit_ell] = format!("ell{tag}[{j1}]");
                }
            }
        }
        if let Some(i) = self.log_sigma2 {
            names[i] = "sigma2".into();
        }
        if let Some(i) = self.log_kappa {
            names[i] = "kappa".into();
        }
        names
    }

    fn positive_slots(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for r in &self.risks {
            out.extend(r.log_psi.clone());
            for s in [&r.intercept, &r.slope].into_iter().flatten() {
                out.push(s.log_tau);
            }
        }
        out.extend(self.log_sigma2);
        out.extend(self.log_kappa);
        out
    }

    fn ell_slots(&self) -> Vec<usize> {
        self.risks
            .iter()
            .flat_map(|r| [&r.intercept, &r.slope].into_iter().flatten().map(|s| s.logit_ell))
            .collect()
    }

    /// Natural-scale values in vector order.
    pub fn constrained_values(&self, u: &[f64]) -> Vec<f64> {
        let mut v = u.to_vec();
        for i in self.positive_slots() {
            v[i] = u[i].exp();
        }
        for i in self.ell_slots() {
            v[i] = self.ell_max * sigmoid(u[i]);
        }
        v
    }

    /// Inverse of [`Self::constrained_values`].
    pub fn unconstrained_values(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim {
            return invalid(format!("expected {} values, got {}", self.dim, v.len()));
        }
        let mut u = v.to_vec();
        for i in self.positive_slots() {
            if !(v[i] > 0.0) {
                return Err(Error::InvalidState(format!("slot {i} must be positive, got {}", v[i])));
            }
            u[i] = v[i].ln();
        }
        for i in self.ell_slots() {
            let s = v[i] / self.ell_max;
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidState(format!(
                    "lengthscale {} outside (0, {})",
                    v[i], self.ell_max
                )));
            }
            u[i] = (s / (1.0 - s)).ln();
        }
        Ok(u)
    }

    pub fn state_from_constrained(&self, v: &[f64]) -> ParameterState {
        let surface = |s: &Option<SurfaceSlots>| {
            s.as_ref().map(|s| SurfaceParams {
                z: v[s.z.clone()].to_vec(),
                tau: v[s.log_tau],
                lengthscale: v[s.logit_ell],
            })
        };
        ParameterState {
            risks: self
                .risks
                .iter()
                .map(|r| RiskParams {
                    beta: v[r.beta.clone()].to_vec(),
                    beta_w: r.beta_w.map(|i| v[i]),
                    psi: v[r.log_psi.clone()].to_vec(),
                    intercept: surface(&r.intercept),
                    slope: surface(&r.slope),
                })
                .collect(),
            sigma2: self.log_sigma2.map(|i| v[i]),
            kappa: self.log_kappa.map(|i| v[i]),
        }
    }

    pub fn constrain(&self, u: &[f64]) -> ParameterState {
        self.state_from_constrained(&self.constrained_values(u))
    }

    /// Flattens a state into natural-scale vector order, checking shapes.
    pub fn constrained_from_state(&self, state: &ParameterState) -> Result<Vec<f64>> {
        if state.risks.len() != self.risks.len() {
            return invalid("risk count mismatch");
        }
        let mut v = vec![0.0; self.dim];
        for (r, slots) in state.risks.iter().zip(&self.risks) {
            if r.beta.len() != self.p || r.psi.len() != self.k {
                return invalid("coefficient or increment length mismatch");
            }
            v[slots.beta.clone()].copy_from_slice(&r.beta);
            match (slots.beta_w, r.beta_w) {
                (Some(i), Some(b)) => v[i] = b,
                (None, None) => {}
                _ => return invalid("beta_w presence mismatch"),
            }
            v[slots.log_psi.clone()].copy_from_slice(&r.psi);
            for (s, p) in [(&slots.intercept, &r.intercept), (&slots.slope, &r.slope)] {
                match (s, p) {
                    (Some(s), Some(p)) => {
                        if p.z.len() != s.z.len() {
                            return invalid("basis weight length mismatch");
                        }
                        v[s.z.clone()].copy_from_slice(&p.z);
                        v[s.log_tau] = p.tau;
                        v[s.logit_ell] = p.lengthscale;
                    }
                    (None, None) => {}
                    _ => return invalid("surface presence mismatch"),
                }
            }
        }
        for (slot, val) in [(self.log_sigma2, state.sigma2), (self.log_kappa, state.kappa)] {
            match (slot, val) {
                (Some(i), Some(x)) => v[i] = x,
                (None, None) => {}
                _ => return invalid("sigma2/kappa presence mismatch"),
            }
        }
        Ok(v)
    }

    pub fn unconstrain(&self, state: &ParameterState) -> Result<Vec<f64>> {
        self.unconstrained_values(&self.constrained_from_state(state)?)
    }

    /// `log |d constrained / d unconstrained|` and its gradient contribution.
    pub(crate) fn log_jacobian(&self, u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let mut total = 0.0;
        let pos = self.positive_slots();
        let ells = self.ell_slots();
        for &i in &pos {
            total += u[i];
        }
        for &i in &ells {
            let s = sigmoid(u[i]);
            total += self.ell_max.ln() + s.ln() + (1.0 - s).ln();
        }
        if let Some(g) = grad {
            for &i in &pos {
                g[i] += 1.0;
            }
            for &i in &ells {
                g[i] += 1.0 - 2.0 * sigmoid(u[i]);
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes_and_names() {
        let l = ParamLayout::new(2, 3, true, 4, SpatialMode::InterceptSlope, 5, 10.0).unwrap();
        // per risk: 3 + 1 + 4 + 2 * (5 + 2) = 22
        assert_eq!(l.dim(), 2 * 22 + 2);
        let names = l.names();
        assert_eq!(names[0], "beta[1,1]");
        assert_eq!(names[3], "beta_w[1]");
        assert!(names.contains(&"ell1[2]".to_string()));
        assert_eq!(names[l.dim() - 1], "kappa");
        let none = ParamLayout::new(1, 0, false, 1, SpatialMode::None, 0, 10.0).unwrap();
        assert_eq!(none.dim(), 1);
        assert!(none.log_sigma2.is_none() && none.log_kappa.is_none());
        assert!(ParamLayout::new(1, 0, false, 2, SpatialMode::InterceptSlope, 4, 10.0).is_err());
    }

    #[test]
    fn transforms_round_trip() {
        let l = ParamLayout::new(2, 2, true, 3, SpatialMode::InterceptSlope, 4, 10.0).unwrap();
        let u: Vec<f64> = (0..l.dim()).map(|i| ((i * 7) as f64 * 0.13).sin() * 2.0).collect();
        let state = l.constrain(&u);
        let back = l.unconstrain(&state).unwrap();
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        let s = state.risks[0].intercept.as_ref().unwrap();
        assert!(s.lengthscale > 0.0 && s.lengthscale < 10.0 && s.tau > 0.0);
    }

    #[test]
    fn invalid_state_detected() {
        let l = ParamLayout::new(1, 1, false, 2, SpatialMode::Intercept, 2, 10.0).unwrap();
        let mut v = l.constrained_values(&vec![0.0; l.dim()]);
        let ell = l.risks[0].intercept.as_ref().unwrap().logit_ell;
        v[ell] = 10.5;
        assert!(matches!(l.unconstrained_values(&v), Err(Error::InvalidState(_))));
        let mut v = l.constrained_values(&vec![0.0; l.dim()]);
        v[l.risks[0].log_psi.start] = -1.0;
        assert!(l.unconstrained_values(&v).is_err());
    }

    #[test]
    fn jacobian_gradient_matches_finite_difference() {
        let l = ParamLayout::new(1, 1, true, 3, SpatialMode::InterceptSlope, 2, 10.0).unwrap();
        let u: Vec<f64> = (0..l.dim()).map(|i| (i as f64 * 0.71).cos()).collect();
        let mut g = vec![0.0; l.dim()];
        l.log_jacobian(&u, Some(&mut g));
        for i in 0..l.dim() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += 1e-6;
            dn[i] -= 1e-6;
            let fd = (l.log_jacobian(&up, None) - l.log_jacobian(&dn, None)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6);
        }
    }
}
