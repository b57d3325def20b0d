//! Hinge penalty on signed depth along the target's outward normals.

use serde::{Deserialize, Serialize};

use super::{LossError, LossTerm};
use crate::geometry::spatial::PointGrid;
use crate::linalg::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenetrationConfig<T = f64> {
    /// Admissible indentation before the penalty starts.
    pub margin: T,
}

/// Sum over target vertices of `max(0, (t_j - s_i*)·n_j - margin)`, where
/// `s_i*` is the source vertex nearest `t_j`. The nearest-vertex assignment is
/// held fixed when differentiating.
pub fn penetration_loss<T: Real>(
    source: &[Vec3<T>],
    target: &[Vec3<T>],
    target_normals: &[Vec3<T>],
    cfg: &PenetrationConfig<T>,
) -> Result<LossTerm<T>, LossError> {
    if target_normals.len() != target.len() {
        return Err(LossError::NormalCount { normals: target_normals.len(), vertices: target.len() });
    }
    if !(cfg.margin >= T::zero()) {
        return Err(LossError::InvalidConfig(format!("margin {} must be non-negative", cfg.margin)));
    }
    if source.is_empty() {
        return Err(LossError::EmptyPointSet("source"));
    }
    let grid = PointGrid::new(source);
    let mut value = T::zero();
    let mut d_source = vec![Vec3::zero(); source.len()];
    for (t, n) in target.iter().zip(target_normals) {
        let (i, _) = grid.nearest(*t).expect("non-empty source");
        let depth = (*t - source[i]).dot(*n) - cfg.margin;
        if depth > T::zero() {
            value += depth;
            d_source[i] -= *n;
        }
    }
    Ok(LossTerm { value, d_source })
}

/// Largest signed depth of any target vertex's nearest source vertex.
pub fn max_signed_depth<T: Real>(source: &[Vec3<T>], target: &[Vec3<T>], target_normals: &[Vec3<T>]) -> T {
    let grid = PointGrid::new(source);
    target
        .iter()
        .zip(target_normals)
        .filter_map(|(t, n)| grid.nearest(*t).map(|(i, _)| (*t - source[i]).dot(*n)))
        .fold(T::neg_infinity(), T::max)
}
