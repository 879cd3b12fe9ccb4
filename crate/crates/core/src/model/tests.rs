use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use super::*;
use crate::spatial::HsgpConfig;

fn exp_model(time: f64, event: u8, end: f64) -> Model {
    let data = Dataset::new(vec![time], vec![event], 1, DMatrix::zeros(1, 0), None, vec![[0.0, 0.0]]).unwrap();
    let spec = ModelSpec::new(SpatialMode::None, 1, GpApprox::Exact).unwrap();
    Model::new(data, spec, Hyperparameters::default(), build_time_grid(end, 1).unwrap()).unwrap()
}

fn const_state(rates: &[f64]) -> ParameterState {
    ParameterState {
        risks: rates
            .iter()
            .map(|&r| RiskParams { beta: vec![], beta_w: None, psi: vec![r], intercept: None, slope: None })
            .collect(),
        sigma2: None,
        kappa: None,
    }
}

#[test]
fn exponential_density_and_survivor() {
    let m = exp_model(1.0, 1, 1.0);
    let (total, pw) = m.log_likelihood(&const_state(&[2.0])).unwrap();
    assert!((total - (2f64.ln() - 2.0)).abs() < 1e-14);
    assert!((total + 1.3069).abs() < 1e-4);
    assert_eq!(pw.len(), 1);
    let m = exp_model(1.0, 0, 1.0);
    let (total, _) = m.log_likelihood(&const_state(&[2.0])).unwrap();
    assert!((total + 2.0).abs() < 1e-14);
}

#[test]
fn time_beyond_grid_rejected() {
    let data = Dataset::new(vec![2.0], vec![1], 1, DMatrix::zeros(1, 0), None, vec![[0.0, 0.0]]).unwrap();
    let spec = ModelSpec::new(SpatialMode::None, 1, GpApprox::Exact).unwrap();
    let err = Model::new(data, spec, Hyperparameters::default(), build_time_grid(1.0, 1).unwrap()).unwrap_err();
    assert!(matches!(err, crate::Error::OutOfRange(_)));
}

#[test]
fn ingestion_rejects_bad_rows() {
    let bad = Dataset::new(vec![1.0, 0.0], vec![1, 0], 1, DMatrix::zeros(2, 0), None, vec![[0.0; 2]; 2]);
    assert!(matches!(bad, Err(crate::Error::Data(_))));
    let bad = Dataset::new(vec![1.0, 2.0], vec![1, 3], 2, DMatrix::zeros(2, 0), None, vec![[0.0; 2]; 2]);
    assert!(bad.is_err());
}

#[test]
fn cause_probability_matches_monte_carlo() {
    // implied P(type 1 first) = integral over t of the type-1 density exp(l(t, delta=1))
    let rates = [1.0, 3.0];
    let end = 20.0;
    let state = const_state(&rates);
    let n_quad = 4000;
    let h = end / n_quad as f64;
    let mut implied = 0.0;
    for q in 0..n_quad {
        let t = (q as f64 + 0.5) * h;
        let data = Dataset::new(vec![t], vec![1], 2, DMatrix::zeros(1, 0), None, vec![[0.0, 0.0]]).unwrap();
        let spec = ModelSpec::new(SpatialMode::None, 1, GpApprox::Exact).unwrap();
        let m = Model::new(data, spec, Hyperparameters::default(), build_time_grid(end, 1).unwrap()).unwrap();
        implied += m.log_likelihood(&state).unwrap().0.exp() * h;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let type1 = (0..n)
        .filter(|_| {
            let t1: f64 = rng.sample::<f64, _>(Exp1) / rates[0];
            let t2: f64 = rng.sample::<f64, _>(Exp1) / rates[1];
            t1 < t2
        })
        .count() as f64
        / n as f64;
    let se = (0.25f64 * 0.75 / n as f64).sqrt();
    assert!((implied - 0.25).abs() < 1e-4, "{implied}");
    assert!((type1 - implied).abs() < 3.0 * se, "{type1} vs {implied}");
}

pub(crate) fn random_spatial_dataset(n: usize, p: usize, n_risks: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let times: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
    let events: Vec<u8> = (0..n).map(|_| rng.random_range(0..=n_risks as u8)).collect();
    Dataset::new(times, events, n_risks, x, Some(w), coords).unwrap()
}

fn random_u(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn check_gradient(model: &Model, points: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..points {
        let u = random_u(model.dim(), &mut rng);
        let (_, g) = model.log_posterior_grad(&u).unwrap();
        for i in 0..model.dim() {
            let fd = |h: f64| {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                (model.eval(&up, None, None).unwrap() - model.eval(&dn, None, None).unwrap()) / (2.0 * h)
            };
            let (d1, d2) = (fd(1e-5), fd(5e-6));
            // Richardson extrapolation of the central difference
            let rich = (4.0 * d2 - d1) / 3.0;
            let rel = (rich - g[i]).abs() / g[i].abs().max(1.0);
            assert!(rel < 1e-5, "coordinate {i}: analytic {} vs fd {rich}", g[i]);
        }
    }
}

#[test]
fn gradient_matches_finite_differences_hsgp() {
    let data = random_spatial_dataset(30, 3, 2, 9);
    let spec = ModelSpec::new(
        SpatialMode::InterceptSlope,
        6,
        GpApprox::Hsgp(HsgpConfig { m_per_dim: 3, boundary_factor: 1.5 }),
    )
    .unwrap();
    let grid = build_time_grid(data.max_time(), 6).unwrap();
    let m = Model::new(data, spec, Hyperparameters::default(), grid).unwrap();
    check_gradient(&m, 3, 1);
}

#[test]
fn gradient_matches_finite_differences_exact() {
    let data = random_spatial_dataset(12, 2, 2, 4);
    let spec = ModelSpec::new(SpatialMode::InterceptSlope, 3, GpApprox::Exact).unwrap();
    let grid = build_time_grid(data.max_time(), 3).unwrap();
    let m = Model::new(data, spec, Hyperparameters::default(), grid).unwrap();
    check_gradient(&m, 3, 2);
}

#[test]
fn posterior_is_likelihood_plus_prior_plus_jacobian() {
    let data = random_spatial_dataset(25, 2, 2, 5);
    let spec =
        ModelSpec::new(SpatialMode::InterceptSlope, 4, GpApprox::Hsgp(HsgpConfig { m_per_dim: 3, boundary_factor: 1.25 }))
            .unwrap();
    let grid = build_time_grid(data.max_time(), 4).unwrap();
    let m = Model::new(data, spec, Hyperparameters::default(), grid.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..5 {
        let u = random_u(m.dim(), &mut rng);
        let state = m.layout().constrain(&u);
        let (ll, pw) = m.log_likelihood(&state).unwrap();
        let lp = log_prior(&state, m.hyper(), &grid).unwrap();
        let jac = m.layout().log_jacobian(&u, None);
        let total = m.eval(&u, None, None).unwrap();
        assert!((total - (ll + lp + jac)).abs() < 1e-9 * total.abs().max(1.0));
        let s: f64 = pw.iter().sum();
        assert!((s - ll).abs() <= 1e-10 * ll.abs().max(1.0));
    }
}

#[test]
fn coefficient_prior_score_is_gaussian() {
    let data = random_spatial_dataset(10, 3, 1, 2);
    let spec = ModelSpec::new(SpatialMode::None, 2, GpApprox::Exact).unwrap();
    let grid = build_time_grid(data.max_time(), 2).unwrap();
    let m = Model::new(data, spec, Hyperparameters::default(), grid).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = random_u(m.dim(), &mut rng);
    let mut g = vec![0.0; m.dim()];
    m.log_prior_unconstrained_for_test(&u, &mut g);
    let s2 = u[m.layout().log_sigma2.unwrap()].exp();
    for idx in m.layout().risks[0].beta.clone() {
        assert!((g[idx] + u[idx] / s2).abs() < 1e-14);
    }
}

#[test]
fn prior_examples() {
    // 4 surfaces of 4 weights at zero: the z part is 16 * (-0.5 ln 2 pi)
    let grid = build_time_grid(2.0, 2).unwrap();
    let surface = |z: Vec<f64>| SurfaceParams { z, tau: 1.0, lengthscale: 1.0 };
    let mk = |z: Vec<f64>| ParameterState {
        risks: (0..2)
            .map(|_| RiskParams {
                beta: vec![],
                beta_w: Some(0.0),
                psi: vec![1.0, 1.0],
                intercept: Some(surface(z.clone())),
                slope: Some(surface(z.clone())),
            })
            .collect(),
        sigma2: Some(1.0),
        kappa: Some(1.0),
    };
    let h = Hyperparameters::default();
    let at_zero = log_prior(&mk(vec![0.0; 4]), &h, &grid).unwrap();
    let at_one = log_prior(&mk(vec![1.0; 4]), &h, &grid).unwrap();
    // moving every weight from 0 to 1 costs exactly 16 * 0.5
    assert!((at_zero - at_one - 8.0).abs() < 1e-12);
    let none = ParameterState {
        risks: (0..2)
            .map(|_| RiskParams {
                beta: vec![],
                beta_w: Some(0.0),
                psi: vec![1.0, 1.0],
                intercept: None,
                slope: None,
            })
            .collect(),
        sigma2: Some(1.0),
        kappa: Some(1.0),
    };
    let base = log_prior(&none, &h, &grid).unwrap();
    let tau_ell = {
        let ln_half_normal = std::f64::consts::LN_2 - 0.5 * (2.0 * std::f64::consts::PI * 16.0).ln() - 1.0 / 32.0;
        let ig = 2.0 * 1f64.ln() - 0.0 - 3.0 * 1f64.ln() - 1.0;
        let mass = statrs::function::gamma::gamma_ur(2.0, 0.1).ln();
        4.0 * (ln_half_normal + ig - mass)
    };
    let z_part = 16.0 * (-0.5 * (2.0 * std::f64::consts::PI).ln());
    assert!((at_zero - base - tau_ell - z_part).abs() < 1e-10);

    let mut over = mk(vec![0.0; 4]);
    over.risks[0].intercept.as_mut().unwrap().lengthscale = h.ell_max + 1e-9;
    assert_eq!(log_prior(&over, &h, &grid).unwrap(), f64::NEG_INFINITY);
    let mut neg = mk(vec![0.0; 4]);
    neg.risks[1].psi[0] = -1.0;
    assert!(matches!(log_prior(&neg, &h, &grid), Err(crate::Error::InvalidState(_))));
}

#[test]
fn increment_prior_is_gamma_with_kappa_over_width() {
    // one risk, widths 1, kappa 2: psi_1 ~ Ga(2, 2), density at 1 is 4 e^-2
    let grid = build_time_grid(2.0, 2).unwrap();
    let h = Hyperparameters::default();
    let state = ParameterState {
        risks: vec![RiskParams { beta: vec![], beta_w: None, psi: vec![1.0, 1.0], intercept: None, slope: None }],
        sigma2: None,
        kappa: Some(2.0),
    };
    let lp = log_prior(&state, &h, &grid).unwrap();
    let psi0 = -1.0; // Ga(1,1) at 1
    let kappa = 2.0 * 40f64.ln() - statrs::function::gamma::ln_gamma(2.0) - 3.0 * 2f64.ln() - 20.0;
    let psi1 = lp - psi0 - kappa;
    assert!((psi1 - (4.0 * (-2f64).exp()).ln()).abs() < 1e-12);
}

#[test]
fn single_interval_posterior_is_conjugate_gamma() {
    // log posterior in log(lambda), minus the Ga(a0 + D, b0 + E) log density
    // (with Jacobian), must be constant
    let times = vec![2.0, 3.0, 1.0, 4.0];
    let events = vec![1, 0, 1, 1];
    let data = Dataset::new(times, events, 1, DMatrix::zeros(4, 0), None, vec![[0.0; 2]; 4]).unwrap();
    let spec = ModelSpec::new(SpatialMode::None, 1, GpApprox::Exact).unwrap();
    let h = Hyperparameters { a0: 1.5, b0: 0.7, ..Default::default() };
    let m = Model::new(data, spec, h.clone(), build_time_grid(4.0, 1).unwrap()).unwrap();
    let (shape, rate) = (h.a0 + 3.0, h.b0 + 10.0);
    let diffs: Vec<f64> = [-2.0, -1.0, 0.0, 0.5]
        .iter()
        .map(|&u: &f64| {
            let lam = u.exp();
            let analytic = shape * u - rate * lam;
            m.eval(&[u], None, None).unwrap() - analytic
        })
        .collect();
    for d in &diffs {
        assert!((d - diffs[0]).abs() < 1e-12);
    }
}

#[test]
fn linear_predictor_examples() {
    let x = DMatrix::from_row_slice(1, 2, &[0.3, 0.0]);
    let data = Dataset::new(vec![1.0], vec![1], 1, x, Some(vec![2.0]), vec![[0.0, 0.0]]).unwrap();
    let spec = ModelSpec::new(SpatialMode::None, 1, GpApprox::Exact).unwrap();
    let m = Model::new(data.clone(), spec, Hyperparameters::default(), build_time_grid(1.0, 1).unwrap()).unwrap();
    let state = ParameterState {
        risks: vec![RiskParams { beta: vec![1.0, 5.0], beta_w: Some(1.0), psi: vec![1.0], intercept: None, slope: None }],
        sigma2: Some(1.0),
        kappa: None,
    };
    assert!((linear_predictor(&m, &state, 0, 0).unwrap() - 2.3).abs() < 1e-15);

    let zero = Dataset::new(vec![1.0], vec![1], 1, DMatrix::zeros(1, 1), Some(vec![0.0]), vec![[0.0, 0.0]]).unwrap();
    let m0 = Model::new(zero, spec, Hyperparameters::default(), build_time_grid(1.0, 1).unwrap()).unwrap();
    let s0 = ParameterState {
        risks: vec![RiskParams { beta: vec![0.7], beta_w: Some(-0.4), psi: vec![1.0], intercept: None, slope: None }],
        sigma2: Some(1.0),
        kappa: None,
    };
    assert_eq!(linear_predictor(&m0, &s0, 0, 0).unwrap(), 0.0);
    assert!(linear_predictor(&m0, &s0, 3, 0).is_err());
}

#[test]
fn intercept_mode_ignores_slope_weights() {
    let data = random_spatial_dataset(15, 1, 1, 3);
    let cfg = HsgpConfig { m_per_dim: 3, boundary_factor: 1.25 };
    let grid = build_time_grid(data.max_time(), 2).unwrap();
    let mi = Model::new(
        data.clone(),
        ModelSpec::new(SpatialMode::Intercept, 2, GpApprox::Hsgp(cfg)).unwrap(),
        Hyperparameters::default(),
        grid.clone(),
    )
    .unwrap();
    let ms = Model::new(data, ModelSpec::new(SpatialMode::InterceptSlope, 2, GpApprox::Hsgp(cfg)).unwrap(), Hyperparameters::default(), grid)
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = random_u(ms.dim(), &mut rng);
    let mut state = ms.layout().constrain(&u);
    let full = linear_predictor(&ms, &state, 2, 0).unwrap();
    state.risks[0].slope.as_mut().unwrap().z.iter_mut().for_each(|z| *z = 0.0);
    let no_slope = linear_predictor(&ms, &state, 2, 0).unwrap();
    state.risks[0].slope = None;
    let intercept_only = linear_predictor(&mi, &state, 2, 0).unwrap();
    assert!((no_slope - intercept_only).abs() < 1e-14);
    assert!((full - no_slope).abs() > 0.0);
}
