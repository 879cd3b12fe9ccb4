use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Affine map from raw planar coordinates to the normalized square:
/// `normalized = (raw - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordTransform {
    pub center: [f64; 2],
    pub scale: f64,
}

impl CoordTransform {
    pub fn apply(&self, raw: [f64; 2]) -> [f64; 2] {
        [(raw[0] - self.center[0]) * self.scale, (raw[1] - self.center[1]) * self.scale]
    }
    pub fn invert(&self, norm: [f64; 2]) -> [f64; 2] {
        [norm[0] / self.scale + self.center[0], norm[1] / self.scale + self.center[1]]
    }
}

/// Centers the bounding box at the origin and scales isotropically so the
/// longer side spans `[-1, 1]`.
pub fn normalize_coords(raw: &[[f64; 2]]) -> Result<(Vec<[f64; 2]>, CoordTransform)> {
    if raw.len() < 2 {
        return invalid("need at least two coordinates to normalize");
    }
    if raw.iter().any(|c| !(c[0].is_finite() && c[1].is_finite())) {
        return invalid("coordinates must be finite");
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in raw {
        for d in 0..2 {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if span <= 0.0 {
        return Err(Error::DegenerateInput("all coordinates are identical".into()));
    }
    let t = CoordTransform {
        center: [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])],
        scale: 2.0 / span,
    };
    Ok((raw.iter().map(|&c| t.apply(c)).collect(), t))
}
