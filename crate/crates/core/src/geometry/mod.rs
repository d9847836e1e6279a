//! Distances, angles, coordinate-transform sampling and the coordinate
//! update maps.

mod psi;
mod transform;

pub use psi::{psi_weighted, AffinePsi, PsiChoice, PsiInputs};
pub use transform::{
    bridge_edges, calibrated_epsilon, frobenius_deviation, local_rotation, sample_local_transform, sample_orthogonal,
    sample_transform, validate_local, SamplerConfig, TransformFamily, TransformSpec,
};

use crate::error::{Error, Result};

/// Rays shorter than this make an angle undefined.
pub const DEGENERACY: f64 = 1e-9;

/// Clamp margin applied to cosines before `acos`.
pub const ACOS_MARGIN: f64 = 1e-12;

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Angle at `xi` between the rays to `xj` and `xk`, in `[0, pi]`.
pub fn angle(xj: &[f64], xi: &[f64], xk: &[f64]) -> Result<f64> {
    let rj: Vec<f64> = xj.iter().zip(xi).map(|(a, b)| a - b).collect();
    let rk: Vec<f64> = xk.iter().zip(xi).map(|(a, b)| a - b).collect();
    let nj = rj.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nk = rk.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nj <= DEGENERACY || nk <= DEGENERACY {
        return Err(Error::DegenerateGeometry(format!(
            "ray length {:.3e} at vertex {xi:?}",
            nj.min(nk)
        )));
    }
    let dot: f64 = rj.iter().zip(&rk).map(|(a, b)| a * b).sum();
    let cos = (dot / (nj * nk)).clamp(-1.0 + ACOS_MARGIN, 1.0 - ACOS_MARGIN);
    Ok(cos.acos())
}
