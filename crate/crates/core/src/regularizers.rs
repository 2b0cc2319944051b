//! Reflection-symmetry losses: squared deviation of the z-indexed planes
//! (and attention maps) from their own z-flips, with analytic gradients.

use crate::planes::FeaturePlane;
use crate::triplane::GeometryTriplane;
use crate::vsa::AttentionMap;
use crate::{Error, Result};

/// A symmetry loss with its per-plane breakdown.
///
/// `value = yz_term + xz_term`; every term is a sum of squares, so the
/// loss is zero exactly when both inputs are z-symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryLoss {
    pub value: f64,
    pub yz_term: f64,
    pub xz_term: f64,
}

impl SymmetryLoss {
    fn new(yz_term: f64, xz_term: f64) -> Self {
        Self { value: yz_term + xz_term, yz_term, xz_term }
    }
}

/// Dense gradients of a symmetry loss over the two penalized planes'
/// data arrays (the xy plane never enters the loss).
#[derive(Debug, Clone)]
pub struct SymmetryLossGrad {
    pub yz: Vec<f64>,
    pub xz: Vec<f64>,
}

/// `Σ_{i,j,c} (P[i,j,c] - P[i,N-1-j,c])²` for one plane.
fn flip_residual_sq(plane: &FeaturePlane) -> f64 {
    let n = plane.resolution();
    let c = plane.channels();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..c {
                let d = plane.get(i, j, k) - plane.get(i, n - 1 - j, k);
                total += d * d;
            }
        }
    }
    total
}

/// Gradient of [`flip_residual_sq`]: entry `(i,j,c)` appears once
/// directly and once inside the mirrored entry's residual, giving
/// `4 (P[i,j,c] - P[i,N-1-j,c])`.
fn flip_residual_sq_grad(plane: &FeaturePlane) -> Vec<f64> {
    let n = plane.resolution();
    let c = plane.channels();
    let mut grad = vec![0.0; n * n * c];
    for i in 0..n {
        for j in 0..n {
            for k in 0..c {
                grad[plane.index(i, j, k)] =
                    4.0 * (plane.get(i, j, k) - plane.get(i, n - 1 - j, k));
            }
        }
    }
    grad
}

/// Squared deviation of the yz and xz geometry planes from their z-flips.
pub fn feature_symmetry_loss(g: &GeometryTriplane) -> SymmetryLoss {
    SymmetryLoss::new(flip_residual_sq(g.yz()), flip_residual_sq(g.xz()))
}

/// Gradient of [`feature_symmetry_loss`] over the yz and xz plane data.
pub fn feature_symmetry_loss_backward(g: &GeometryTriplane) -> SymmetryLossGrad {
    SymmetryLossGrad {
        yz: flip_residual_sq_grad(g.yz()),
        xz: flip_residual_sq_grad(g.xz()),
    }
}

fn map_residual_sq(map: &AttentionMap) -> f64 {
    let n = map.resolution();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = map.get(i, j) - map.get(i, n - 1 - j);
            total += d * d;
        }
    }
    total
}

fn map_residual_sq_grad(map: &AttentionMap) -> Vec<f64> {
    let n = map.resolution();
    let mut grad = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            grad[i * n + j] = 4.0 * (map.get(i, j) - map.get(i, n - 1 - j));
        }
    }
    grad
}

/// Squared deviation of the yz and xz attention maps from their z-flips.
pub fn attention_symmetry_loss(a_yz: &AttentionMap, a_xz: &AttentionMap) -> SymmetryLoss {
    SymmetryLoss::new(map_residual_sq(a_yz), map_residual_sq(a_xz))
}

/// Gradients of [`attention_symmetry_loss`] over the two maps' values;
/// feed these into the attention backward pass to reach kernels and
/// plane entries.
pub fn attention_symmetry_loss_backward(
    a_yz: &AttentionMap,
    a_xz: &AttentionMap,
) -> SymmetryLossGrad {
    SymmetryLossGrad {
        yz: map_residual_sq_grad(a_yz),
        xz: map_residual_sq_grad(a_xz),
    }
}

/// Sum of [`feature_symmetry_loss`] over a list of triplane scales.
pub fn multiscale_feature_symmetry_loss(scales: &[GeometryTriplane]) -> Result<SymmetryLoss> {
    if scales.is_empty() {
        return Err(Error::InvalidInput("multiscale loss needs at least one scale".into()));
    }
    let mut yz = 0.0;
    let mut xz = 0.0;
    for g in scales {
        let term = feature_symmetry_loss(g);
        yz += term.yz_term;
        xz += term.xz_term;
    }
    Ok(SymmetryLoss::new(yz, xz))
}
