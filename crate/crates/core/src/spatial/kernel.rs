use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{invalid, Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Magnitude and lengthscale of a Matérn-3/2 kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternParams {
    pub tau: f64,
    pub lengthscale: f64,
}

impl MaternParams {
    pub fn new(tau: f64, lengthscale: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite() && lengthscale > 0.0 && lengthscale.is_finite()) {
            return invalid(format!("tau ({tau}) and lengthscale ({lengthscale}) must be positive"));
        }
        Ok(Self { tau, lengthscale })
    }
}

/// `tau^2 (1 + sqrt(3) r / l) exp(-sqrt(3) r / l)`.
pub fn matern32(r: f64, params: MaternParams) -> Result<f64> {
    if !(r >= 0.0) {
        return invalid(format!("distance must be nonnegative, got {r}"));
    }
    Ok(matern32_unchecked(r, params))
}

pub(crate) fn matern32_unchecked(r: f64, params: MaternParams) -> f64 {
    let a = SQRT3 * r / params.lengthscale;
    params.tau * params.tau * (1.0 + a) * (-a).exp()
}

/// Derivative of the kernel with respect to the lengthscale.
pub fn matern32_dlengthscale(r: f64, params: MaternParams) -> f64 {
    let a = SQRT3 * r / params.lengthscale;
    params.tau * params.tau * a * a * (-a).exp() / params.lengthscale
}

/// Two-dimensional spectral density of the Matérn-3/2 kernel at squared
/// frequency `omega_sq`:
/// `tau^2 * 4 pi * (Gamma(5/2)/Gamma(3/2)) * 3^{3/2} l^{-3} (3/l^2 + omega^2)^{-5/2}`.
pub fn matern32_spectral_density(omega_sq: f64, params: MaternParams) -> f64 {
    let l = params.lengthscale;
    // Gamma(5/2)/Gamma(3/2) = 3/2
    let c = 4.0 * std::f64::consts::PI * 1.5 * 3f64.powf(1.5);
    params.tau * params.tau * c / (l * l * l) * (3.0 / (l * l) + omega_sq).powf(-2.5)
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn cross_cov(a: &[[f64; 2]], b: &[[f64; 2]], params: MaternParams) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| matern32_unchecked(dist(&a[i], &b[j]), params))
}

/// Exact covariance matrix over `coords`, without jitter.
pub fn exact_cov(coords: &[[f64; 2]], params: MaternParams) -> Result<DMatrix<f64>> {
    if coords.is_empty() {
        return invalid("need at least one coordinate");
    }
    Ok(cross_cov(coords, coords, params))
}

/// Cholesky factorization after adding `jitter * scale` to the diagonal,
/// starting at `1e-8 * scale` and escalating by 10x up to `1e-4 * scale`.
pub fn cholesky_with_jitter(mat: &DMatrix<f64>, scale: f64) -> Result<Cholesky<f64, Dyn>> {
    let mut jitter = 1e-8;
    while jitter <= 1e-4 * (1.0 + 1e-9) {
        let mut m = mat.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter * scale;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok(ch);
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "Cholesky failed for a {}x{} covariance after jitter escalation",
        mat.nrows(),
        mat.ncols()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(tau: f64, l: f64) -> MaternParams {
        MaternParams::new(tau, l).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(matern32(0.0, p(2.0, 0.7)).unwrap(), 4.0);
        let v = matern32(1.0, p(1.0, 1.0)).unwrap();
        let closed = (1.0 + 3f64.sqrt()) * (-(3f64.sqrt())).exp();
        assert!((v - closed).abs() < 1e-15);
        assert!((v - 0.48335).abs() < 1e-5);
        assert!(matern32(-0.1, p(1.0, 1.0)).is_err());
        let mut prev = 1.0;
        for i in 1..200 {
            let k = matern32(i as f64 * 0.1, p(1.0, 1.0)).unwrap();
            assert!(k < prev);
            prev = k;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn lengthscale_one_scale_check() {
        // 25% correlation at roughly 1.6 lengthscales; tapering off by ~3x that
        let r25 = (0..10_000)
            .map(|i| i as f64 * 1e-3)
            .find(|&r| matern32(r, p(1.0, 1.0)).unwrap() < 0.25)
            .unwrap();
        assert!(r25 > 1.4 && r25 < 1.8, "{r25}");
        assert!(matern32(3.0 * r25, p(1.0, 1.0)).unwrap() < 0.01);
    }

    #[test]
    fn dlengthscale_matches_finite_difference() {
        for &(r, l) in &[(0.3, 0.5), (1.2, 0.8), (0.0, 1.0), (2.0, 3.0)] {
            let h = 1e-6;
            let fd = (matern32(r, p(1.3, l + h)).unwrap() - matern32(r, p(1.3, l - h)).unwrap()) / (2.0 * h);
            assert!((fd - matern32_dlengthscale(r, p(1.3, l))).abs() < 1e-8);
        }
    }

    #[test]
    fn spectral_density_values() {
        let s0 = matern32_spectral_density(0.0, p(1.0, 1.0));
        assert!((s0 - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((s0 - 18.0 * 3f64.sqrt() * std::f64::consts::PI * 3f64.powf(-2.5)).abs() < 1e-12);
        let s2 = matern32_spectral_density(2.3, p(2.0, 0.4));
        let s1 = matern32_spectral_density(2.3, p(1.0, 0.4));
        assert!((s2 - 4.0 * s1).abs() < 1e-12 * s2);
        assert!(matern32_spectral_density(3.0, p(1.0, 0.4)) < s1);
    }

    #[test]
    fn spectral_density_integrates_to_variance() {
        // k(0) = (2 pi)^-2 * integral of S over R^2 = (1/2pi) int_0^inf S(w) w dw
        let pr = p(1.0, 0.7);
        let (n, wmax) = (400_000, 400.0);
        let h = wmax / n as f64;
        let integral: f64 = (0..n)
            .map(|i| {
                let w = (i as f64 + 0.5) * h;
                matern32_spectral_density(w * w, pr) * w * h
            })
            .sum();
        assert!((integral / (2.0 * std::f64::consts::PI) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn exact_cov_examples() {
        let one = exact_cov(&[[0.3, -0.2]], p(1.5, 0.5)).unwrap();
        assert_eq!(one[(0, 0)], 2.25);
        let two = exact_cov(&[[0.1, 0.1], [0.1, 0.1]], p(1.0, 0.5)).unwrap();
        assert!(two.iter().all(|&v| v == 1.0));
        assert!(cholesky_with_jitter(&two, 1.0).is_ok());
        let pts = [[0.1, 0.2], [-0.5, 0.3], [0.9, -0.9], [0.0, 0.0], [-0.2, -0.7]];
        let c = exact_cov(&pts, p(0.8, 0.4)).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let r = ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt();
                let direct = 0.64 * (1.0 + 3f64.sqrt() * r / 0.4) * (-(3f64.sqrt()) * r / 0.4).exp();
                assert!((c[(i, j)] - direct).abs() < 1e-14);
            }
        }
        assert!(cholesky_with_jitter(&c, 0.64).is_ok());
        assert!(exact_cov(&[], p(1.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn kernel_matrix_is_factorizable(
            pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..50),
            l in 0.05f64..3.0,
            tau in 0.1f64..3.0,
        ) {
            let coords: Vec<[f64; 2]> = pts.iter().map(|&(a, b)| [a, b]).collect();
            let c = exact_cov(&coords, p(tau, l)).unwrap();
            prop_assert!(cholesky_with_jitter(&c, tau * tau).is_ok());
            prop_assert!((c.clone() - c.transpose()).abs().max() == 0.0);
        }
    }
}
