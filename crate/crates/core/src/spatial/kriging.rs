use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::hsgp::{surface_from_weights, HsgpBasis};
use super::kernel::{cholesky_with_jitter, cross_cov, MaternParams};
use crate::error::{invalid, Result};

/// Mean and covariance of the conditional distribution at new locations.
#[derive(Debug, Clone, PartialEq)]
pub struct KrigingMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Conditional moments of `theta*` given `theta_obs` under the exact GP.
pub fn kriging_moments(
    theta_obs: &[f64],
    coords_obs: &[[f64; 2]],
    coords_new: &[[f64; 2]],
    params: MaternParams,
) -> Result<KrigingMoments> {
    if theta_obs.len() != coords_obs.len() {
        return invalid("theta_obs and coords_obs lengths differ");
    }
    if coords_obs.is_empty() || coords_new.is_empty() {
        return invalid("need observed and new coordinates");
    }
    let scale = params.tau * params.tau;
    let sigma = cross_cov(coords_obs, coords_obs, params);
    let chol = cholesky_with_jitter(&sigma, scale)?;
    let cross = cross_cov(coords_obs, coords_new, params);
    let prior_new = cross_cov(coords_new, coords_new, params);
    let obs = DVector::from_column_slice(theta_obs);
    let mean = cross.transpose() * chol.solve(&obs);
    let solved = chol.solve(&cross);
    let mut cov = prior_new - cross.transpose() * solved;
    cov = (&cov + cov.transpose()) * 0.5;
    Ok(KrigingMoments { mean, cov })
}

/// One draw from the exact kriging distribution.
pub fn krige_exact<R: Rng + ?Sized>(
    theta_obs: &[f64],
    coords_obs: &[[f64; 2]],
    coords_new: &[[f64; 2]],
    params: MaternParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = kriging_moments(theta_obs, coords_obs, coords_new, params)?;
    let q = coords_new.len();
    let eps = DVector::from_iterator(q, (0..q).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let scale = params.tau * params.tau;
    let draw = match cholesky_with_jitter(&m.cov, scale) {
        Ok(ch) => &m.mean + ch.l() * eps,
        Err(_) => {
            // conditional covariance is only PSD near observed sites
            let eig = SymmetricEigen::new(m.cov.clone());
            let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
            &m.mean + &eig.eigenvectors * roots.component_mul(&eps)
        }
    };
    Ok(draw.as_slice().to_vec())
}

/// Degenerate low-rank kriging: evaluate the fitted weights on the new basis.
pub fn krige_hsgp(z: &[f64], fit_basis: &HsgpBasis, basis_new: &HsgpBasis, params: MaternParams) -> Result<Vec<f64>> {
    if !fit_basis.same_domain(basis_new) {
        return invalid("kriging basis must share the fitting basis domain and frequencies");
    }
    surface_from_weights(basis_new, params, z)
}

/// Subtracts the mean in place so the values sum to zero.
pub fn sum_to_zero(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in values.iter_mut() {
        *v -= mean;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::kernel::{exact_cov, matern32};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(tau: f64, l: f64) -> MaternParams {
        MaternParams::new(tau, l).unwrap()
    }

    #[test]
    fn interpolates_at_observed_sites() {
        let obs = [[0.0, 0.0], [0.5, 0.1], [-0.3, 0.7]];
        let theta = [0.4, -1.2, 0.8];
        let m = kriging_moments(&theta, &obs, &obs, p(1.0, 0.5)).unwrap();
        for i in 0..3 {
            assert!((m.mean[i] - theta[i]).abs() < 1e-5);
        }
        assert!(m.cov.abs().max() < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = krige_exact(&theta, &obs, &obs, p(1.0, 0.5), &mut rng).unwrap();
        for i in 0..3 {
            assert!((d[i] - theta[i]).abs() < 1e-2);
        }
    }

    #[test]
    fn far_points_revert_to_prior() {
        let obs = [[0.0, 0.0], [0.5, 0.1]];
        let m = kriging_moments(&[1.0, 2.0], &obs, &[[1e4, 1e4]], p(1.5, 0.5)).unwrap();
        assert!(m.mean[0].abs() < 1e-12);
        assert!((m.cov[(0, 0)] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn matches_partitioned_gaussian_formula() {
        // independent route: joint covariance, partition, explicit inverse
        let obs = [[0.1, 0.3], [-0.6, 0.2], [0.4, -0.5]];
        let new = [[0.0, 0.0], [0.8, 0.8]];
        let params = p(1.3, 0.7);
        let theta = [0.2, -0.4, 1.1];
        let all: Vec<[f64; 2]> = obs.iter().chain(new.iter()).copied().collect();
        let mut joint = DMatrix::zeros(5, 5);
        for i in 0..5 {
            for j in 0..5 {
                let r = ((all[i][0] - all[j][0]).powi(2) + (all[i][1] - all[j][1]).powi(2)).sqrt();
                joint[(i, j)] = matern32(r, params).unwrap();
            }
        }
        let s11 = joint.view((0, 0), (3, 3)).into_owned();
        let s12 = joint.view((0, 3), (3, 2)).into_owned();
        let s22 = joint.view((3, 3), (2, 2)).into_owned();
        let inv = s11.try_inverse().unwrap();
        let mean = s12.transpose() * &inv * DVector::from_column_slice(&theta);
        let cov = s22 - s12.transpose() * &inv * &s12;
        let m = kriging_moments(&theta, &obs, &new, params).unwrap();
        assert!((m.mean - mean).abs().max() < 1e-6);
        assert!((m.cov - cov).abs().max() < 1e-6);
    }

    #[test]
    fn hsgp_kriging_at_fit_sites_reproduces_surface() {
        let pts = [[0.1, 0.2], [-0.4, 0.6], [0.7, -0.3]];
        let b = HsgpBasis::with_domain(&pts, [1.25, 1.25], 4).unwrap();
        let params = p(0.7, 0.4);
        let z: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let fitted = surface_from_weights(&b, params, &z).unwrap();
        let again = krige_hsgp(&z, &b, &b.at(&pts).unwrap(), params).unwrap();
        assert_eq!(fitted, again);
        let other = HsgpBasis::with_domain(&pts, [1.5, 1.25], 4).unwrap();
        assert!(krige_hsgp(&z, &b, &other, params).is_err());
    }

    #[test]
    fn hsgp_kriging_center_parity() {
        // sin(pi m / 2) vanishes for even m at the domain centre
        let b = HsgpBasis::with_domain(&[[0.0, 0.0]], [1.0, 1.0], 4).unwrap();
        let params = p(1.0, 0.5);
        let roots = b.sqrt_spectral(params);
        let z: Vec<f64> = b.frequencies().iter().map(|&(a, c)| if a % 2 == 1 && c % 2 == 1 { 1.0 } else { 0.0 }).collect();
        let v = krige_hsgp(&z, &b, &b, params).unwrap()[0];
        let expect: f64 = b
            .frequencies()
            .iter()
            .enumerate()
            .filter(|(_, &(a, c))| a % 2 == 1 && c % 2 == 1)
            .map(|(col, &(a, c))| {
                let sign = if (a / 2 + c / 2) % 2 == 0 { 1.0 } else { -1.0 };
                sign * roots[col]
            })
            .sum();
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn hsgp_kriging_is_linear() {
        let pts = [[0.2, -0.1], [0.5, 0.5]];
        let b = HsgpBasis::with_domain(&pts, [1.25, 1.25], 3).unwrap();
        let params = p(1.0, 0.8);
        let z1: Vec<f64> = (0..9).map(|i| i as f64 * 0.1 - 0.3).collect();
        let z2: Vec<f64> = (0..9).map(|i| (i as f64).cos()).collect();
        let alpha = 2.5;
        let comb: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| alpha * a + b).collect();
        let lhs = krige_hsgp(&comb, &b, &b, params).unwrap();
        let r1 = krige_hsgp(&z1, &b, &b, params).unwrap();
        let r2 = krige_hsgp(&z2, &b, &b, params).unwrap();
        for i in 0..2 {
            assert!((lhs[i] - (alpha * r1[i] + r2[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_to_zero_examples() {
        let mut v = [1.0, 2.0, 3.0];
        sum_to_zero(&mut v);
        assert_eq!(v, [-1.0, 0.0, 1.0]);
        let mut c = [-0.5, 0.5];
        sum_to_zero(&mut c);
        assert_eq!(c, [-0.5, 0.5]);
        let mut r: Vec<f64> = (0..50).map(|i| (i as f64 * 1.3).sin() + 4.0).collect();
        let before: Vec<f64> = r.windows(2).map(|w| w[0] - w[1]).collect();
        sum_to_zero(&mut r);
        let after: Vec<f64> = r.windows(2).map(|w| w[0] - w[1]).collect();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.iter().sum::<f64>().abs() < 1e-10 * 50.0);
        let once = r.clone();
        sum_to_zero(&mut r);
        for (a, b) in once.iter().zip(&r) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_cov_used_for_kriging_is_the_kernel() {
        let obs = [[0.0, 0.0], [0.3, 0.3]];
        let c = exact_cov(&obs, p(1.0, 1.0)).unwrap();
        assert_eq!(c[(0, 1)], c[(1, 0)]);
    }
}
