//! Matérn-3/2 Gaussian processes on planar coordinates: exact covariance,
//! the Hilbert-space low-rank basis, kriging, and identifiability
//! post-processing.

mod coords;
mod hsgp;
mod kernel;
mod kriging;

pub use coords::{normalize_coords, CoordTransform};
pub use hsgp::{hsgp_basis, surface_from_weights, HsgpBasis, HsgpConfig};
pub use kernel::{
    cholesky_with_jitter, exact_cov, matern32, matern32_dlengthscale, matern32_spectral_density,
    MaternParams,
};
pub use kriging::{krige_exact, krige_hsgp, kriging_moments, sum_to_zero, KrigingMoments};
