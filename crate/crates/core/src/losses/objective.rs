use serde::{Deserialize, Serialize};

use super::{LossError, LossTerm};
use crate::linalg::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights<T = f64> {
    pub lambda_clip: T,
    pub lambda_icp: T,
    pub lambda_pen: T,
}

impl<T: Real> LossWeights<T> {
    pub fn validate(&self) -> Result<(), LossError> {
        let ok = |w: T| w >= T::zero() && w.is_finite();
        if ok(self.lambda_clip) && ok(self.lambda_icp) && ok(self.lambda_pen) {
            Ok(())
        } else {
            Err(LossError::InvalidConfig("loss weights must be finite and non-negative".into()))
        }
    }

    /// Weighted sum of three scalar terms.
    pub fn combine(&self, clip: T, icp: T, pen: T) -> T {
        self.lambda_clip * clip + self.lambda_icp * icp + self.lambda_pen * pen
    }
}

/// Weighted objective with its parts and its gradient on the source vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown<T = f64> {
    pub total: T,
    pub clip_term: T,
    pub icp_term: T,
    pub pen_term: T,
    pub d_source_vertices: Vec<Vec3<T>>,
}

pub fn total_objective<T: Real>(
    clip: &LossTerm<T>,
    icp: &LossTerm<T>,
    pen: &LossTerm<T>,
    weights: &LossWeights<T>,
) -> Result<LossBreakdown<T>, LossError> {
    weights.validate()?;
    for (name, term) in [("clip term", clip), ("icp term", icp), ("penetration term", pen)] {
        if !term.is_finite() {
            return Err(LossError::NonFinite(name));
        }
    }
    let n = clip.d_source.len();
    if icp.d_source.len() != n || pen.d_source.len() != n {
        return Err(LossError::InvalidConfig("loss terms disagree on vertex count".into()));
    }
    let d_source_vertices = (0..n)
        .map(|i| {
            clip.d_source[i] * weights.lambda_clip
                + icp.d_source[i] * weights.lambda_icp
                + pen.d_source[i] * weights.lambda_pen
        })
        .collect();
    Ok(LossBreakdown {
        total: weights.combine(clip.value, icp.value, pen.value),
        clip_term: clip.value,
        icp_term: icp.value,
        pen_term: pen.value,
        d_source_vertices,
    })
}
