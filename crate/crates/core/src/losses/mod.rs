//! Geometric objectives on source vertices and the weighted total.

mod icp;
mod objective;
mod penetration;

use thiserror::Error;

pub use icp::{fractional_soft_icp, fractional_soft_icp_with, select_attached, IcpConfig, SoftmaxSupport};
pub use objective::{total_objective, LossBreakdown, LossWeights};
pub use penetration::{max_signed_depth, penetration_loss, PenetrationConfig};

use crate::linalg::Vec3;

/// Target sets larger than this use the truncated softmax by default.
pub const DENSE_SOFTMAX_LIMIT: usize = 4096;
/// Neighbours kept per source vertex in the truncated softmax.
pub const TRUNCATED_NEIGHBOURS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("ratio {ratio} selects no vertices out of {count}")]
    EmptySelection { ratio: f64, count: usize },
    #[error("{0} point set is empty")]
    EmptyPointSet(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{normals} normals for {vertices} target vertices")]
    NormalCount { normals: usize, vertices: usize },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
}

/// Scalar loss value with its gradient on each source vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerm<T> {
    pub value: T,
    pub d_source: Vec<Vec3<T>>,
}

impl<T: crate::Real> LossTerm<T> {
    pub fn zero(n: usize) -> Self {
        Self { value: T::zero(), d_source: vec![Vec3::zero(); n] }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.d_source.iter().all(|g| g.is_finite())
    }
}
