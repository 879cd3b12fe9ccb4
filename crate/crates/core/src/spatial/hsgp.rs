use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::{matern32_spectral_density, MaternParams};
use crate::error::{invalid, Error, Result};

/// Basis size and boundary extension for the Hilbert-space approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HsgpConfig {
    /// Basis functions per coordinate dimension; the basis has `m_per_dim^2` columns.
    pub m_per_dim: usize,
    /// Domain half-width multiplier `c` (`L_d = c * max |coord_d|`).
    pub boundary_factor: f64,
}

impl Default for HsgpConfig {
    fn default() -> Self {
        Self { m_per_dim: 32, boundary_factor: 1.25 }
    }
}

impl HsgpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_per_dim == 0 {
            return invalid("m_per_dim must be at least 1");
        }
        if !(self.boundary_factor >= 1.0 && self.boundary_factor.is_finite()) {
            return invalid(format!("boundary_factor must be >= 1, got {}", self.boundary_factor));
        }
        Ok(())
    }
}

/// Laplacian eigenfunctions of the box `[-L_1, L_1] x [-L_2, L_2]` evaluated
/// at a set of coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct HsgpBasis {
    half_widths: [f64; 2],
    m_per_dim: usize,
    frequencies: Vec<(usize, usize)>,
    /// `n x m_basis` feature matrix.
    phi: DMatrix<f64>,
    eigvals: Vec<f64>,
}

/// Builds the basis for `coords` (assumed centered), deriving the domain
/// from the coordinate extent.
pub fn hsgp_basis(coords: &[[f64; 2]], config: &HsgpConfig) -> Result<HsgpBasis> {
    config.validate()?;
    if coords.is_empty() {
        return invalid("need at least one coordinate");
    }
    let mut half_widths = [0.0; 2];
    for (d, hw) in half_widths.iter_mut().enumerate() {
        let extent = coords.iter().map(|c| c[d].abs()).fold(0.0, f64::max);
        if extent == 0.0 {
            return Err(Error::DegenerateInput(format!("coordinate dimension {d} has zero extent")));
        }
        *hw = config.boundary_factor * extent;
    }
    HsgpBasis::with_domain(coords, half_widths, config.m_per_dim)
}

impl HsgpBasis {
    /// Builds the basis on an explicit domain.
    pub fn with_domain(coords: &[[f64; 2]], half_widths: [f64; 2], m_per_dim: usize) -> Result<Self> {
        if m_per_dim == 0 {
            return invalid("m_per_dim must be at least 1");
        }
        if half_widths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return invalid("domain half-widths must be positive");
        }
        for (i, c) in coords.iter().enumerate() {
            for d in 0..2 {
                if !(c[d].abs() <= half_widths[d]) {
                    return Err(Error::OutOfDomain(format!(
                        "point {i} coordinate {d} = {} outside [-{1}, {1}]",
                        c[d], half_widths[d]
                    )));
                }
            }
        }
        let frequencies: Vec<(usize, usize)> = (1..=m_per_dim)
            .flat_map(|a| (1..=m_per_dim).map(move |b| (a, b)))
            .collect();
        let eigvals = frequencies
            .iter()
            .map(|&(a, b)| {
                let w1 = std::f64::consts::PI * a as f64 / (2.0 * half_widths[0]);
                let w2 = std::f64::consts::PI * b as f64 / (2.0 * half_widths[1]);
                w1 * w1 + w2 * w2
            })
            .collect();
        // per-dimension factors, then outer products
        let n = coords.len();
        let mut per_dim = [DMatrix::zeros(n, m_per_dim), DMatrix::zeros(n, m_per_dim)];
        for d in 0..2 {
            let l = half_widths[d];
            let norm = 1.0 / l.sqrt();
            for (i, c) in coords.iter().enumerate() {
                for m in 0..m_per_dim {
                    let arg = std::f64::consts::PI * (m + 1) as f64 * (c[d] + l) / (2.0 * l);
                    per_dim[d][(i, m)] = norm * arg.sin();
                }
            }
        }
        let phi = DMatrix::from_fn(n, frequencies.len(), |i, col| {
            let (a, b) = frequencies[col];
            per_dim[0][(i, a - 1)] * per_dim[1][(i, b - 1)]
        });
        Ok(Self { half_widths, m_per_dim, frequencies, phi, eigvals })
    }

    /// Same domain and frequencies evaluated at new coordinates.
    pub fn at(&self, coords: &[[f64; 2]]) -> Result<Self> {
        Self::with_domain(coords, self.half_widths, self.m_per_dim)
    }

    pub fn half_widths(&self) -> [f64; 2] {
        self.half_widths
    }
    pub fn m_per_dim(&self) -> usize {
        self.m_per_dim
    }
    pub fn m_basis(&self) -> usize {
        self.frequencies.len()
    }
    pub fn frequencies(&self) -> &[(usize, usize)] {
        &self.frequencies
    }
    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }
    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }
    pub fn n_points(&self) -> usize {
        self.phi.nrows()
    }

    pub fn same_domain(&self, other: &HsgpBasis) -> bool {
        self.half_widths == other.half_widths && self.m_per_dim == other.m_per_dim
    }

    /// Square roots of the spectral density at each eigenvalue.
    pub fn sqrt_spectral(&self, params: MaternParams) -> Vec<f64> {
        self.eigvals
            .iter()
            .map(|&w2| matern32_spectral_density(w2, params).sqrt())
            .collect()
    }

    /// Low-rank covariance `Phi_a diag(S) Phi_b'` between two bases on the same domain.
    pub fn approx_cov(&self, other: &HsgpBasis, params: MaternParams) -> DMatrix<f64> {
        let s: Vec<f64> = self.eigvals.iter().map(|&w2| matern32_spectral_density(w2, params)).collect();
        let mut scaled = self.phi.clone();
        for (col, sv) in s.iter().enumerate() {
            scaled.column_mut(col).scale_mut(*sv);
        }
        scaled * other.phi.transpose()
    }
}

/// `Phi diag(sqrt(S)) z`.
pub fn surface_from_weights(basis: &HsgpBasis, params: MaternParams, z: &[f64]) -> Result<Vec<f64>> {
    if z.len() != basis.m_basis() {
        return invalid(format!("expected {} weights, got {}", basis.m_basis(), z.len()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return invalid("weights must be finite");
    }
    let scaled: DVector<f64> = DVector::from_iterator(
        z.len(),
        basis.sqrt_spectral(params).iter().zip(z).map(|(s, zi)| s * zi),
    );
    Ok((basis.phi() * scaled).as_slice().to_vec())
}
