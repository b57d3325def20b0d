//! Fractional soft-ICP attachment.
//!
//! Only the `K = floor(r * N_S)` source vertices closest to the target take
//! part; each of them is softly matched to every target vertex with a
//! Gaussian softmax and contributes its expected squared distance. The
//! gradient differentiates through the softmax weights and treats the
//! selected set as fixed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LossError, LossTerm, DENSE_SOFTMAX_LIMIT, TRUNCATED_NEIGHBOURS};
use crate::geometry::spatial::PointGrid;
use crate::linalg::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig<T = f64> {
    /// Attachment ratio r in (0, 1].
    pub ratio: T,
    /// Softmax temperature in model units.
    pub sigma: T,
}

impl<T: Real> IcpConfig<T> {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.ratio > T::zero() && self.ratio <= T::one()) {
            return Err(LossError::InvalidConfig(format!("ratio {} not in (0, 1]", self.ratio)));
        }
        if !(self.sigma > T::zero()) || !self.sigma.is_finite() {
            return Err(LossError::InvalidConfig(format!("sigma {} must be positive", self.sigma)));
        }
        Ok(())
    }

    /// Number of attached vertices out of `n`.
    pub fn selected_count(&self, n: usize) -> usize {
        // The epsilon absorbs representation error in r (0.7 * 30 = 20.999...).
        (self.ratio.as_f64() * n as f64 + 1e-9).floor() as usize
    }
}

/// Which targets enter each source vertex's softmax.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftmaxSupport {
    Dense,
    /// The `k` nearest targets, renormalized.
    Nearest(usize),
}

impl SoftmaxSupport {
    pub fn auto(target_count: usize) -> Self {
        if target_count <= DENSE_SOFTMAX_LIMIT {
            SoftmaxSupport::Dense
        } else {
            SoftmaxSupport::Nearest(TRUNCATED_NEIGHBOURS)
        }
    }
}

/// Indices of the `k` source vertices nearest the target, in ascending index
/// order. Ties in distance go to the lower index.
pub fn select_attached<T: Real>(source: &[Vec3<T>], grid: &PointGrid<'_, T>, k: usize) -> Vec<usize> {
    let mut d: Vec<(T, usize)> = source
        .iter()
        .enumerate()
        .map(|(i, v)| (grid.nearest(*v).map(|n| n.1).unwrap_or(T::infinity()), i))
        .collect();
    d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut w: Vec<usize> = d.into_iter().take(k).map(|(_, i)| i).collect();
    w.sort_unstable();
    w
}

/// Expected squared distance of `v` under the softmax over `targets`, and its
/// gradient with respect to `v`.
#[inline]
pub(crate) fn soft_match<T: Real>(v: Vec3<T>, targets: impl Iterator<Item = Vec3<T>> + Clone, inv_two_sigma_sq: T) -> (T, Vec3<T>) {
    let e_min = targets.clone().map(|t| (v - t).norm_squared()).fold(T::infinity(), T::min);
    let mut z = T::zero();
    let mut weighted = T::zero();
    for t in targets.clone() {
        let e = (v - t).norm_squared();
        let w = (-(e - e_min) * inv_two_sigma_sq).exp();
        z += w;
        weighted += w * e;
    }
    let loss = weighted / z;
    let mut grad = Vec3::zero();
    for t in targets {
        let d = v - t;
        let e = d.norm_squared();
        let alpha = (-(e - e_min) * inv_two_sigma_sq).exp() / z;
        grad += d * (alpha * (T::one() - (e - loss) * inv_two_sigma_sq) * T::two());
    }
    (loss, grad)
}

pub fn fractional_soft_icp<T: Real>(
    source: &[Vec3<T>],
    target: &[Vec3<T>],
    cfg: &IcpConfig<T>,
) -> Result<LossTerm<T>, LossError> {
    fractional_soft_icp_with(source, target, cfg, SoftmaxSupport::auto(target.len()))
}

pub fn fractional_soft_icp_with<T: Real>(
    source: &[Vec3<T>],
    target: &[Vec3<T>],
    cfg: &IcpConfig<T>,
    support: SoftmaxSupport,
) -> Result<LossTerm<T>, LossError> {
    cfg.validate()?;
    if source.is_empty() {
        return Err(LossError::EmptyPointSet("source"));
    }
    if target.is_empty() {
        return Err(LossError::EmptyPointSet("target"));
    }
    let k = cfg.selected_count(source.len());
    if k == 0 {
        return Err(LossError::EmptySelection { ratio: cfg.ratio.as_f64(), count: source.len() });
    }
    let grid = PointGrid::new(target);
    let selected = if k == source.len() { (0..k).collect() } else { select_attached(source, &grid, k) };
    let inv = T::one() / (T::two() * cfg.sigma * cfg.sigma);

    let per_vertex: Vec<(T, Vec3<T>)> = selected
        .par_iter()
        .map(|&i| {
            let v = source[i];
            match support {
                SoftmaxSupport::Dense => soft_match(v, target.iter().copied(), inv),
                SoftmaxSupport::Nearest(n) => {
                    let near = grid.k_nearest(v, n);
                    soft_match(v, near.iter().map(|&(j, _)| target[j]), inv)
                }
            }
        })
        .collect();

    let scale = T::one() / T::count(k);
    let mut value = T::zero();
    let mut d_source = vec![Vec3::zero(); source.len()];
    for (&i, &(l, g)) in selected.iter().zip(&per_vertex) {
        value += l;
        d_source[i] = g * scale;
    }
    Ok(LossTerm { value: value * scale, d_source })
}
