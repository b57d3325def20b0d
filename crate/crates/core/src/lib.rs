//! Object-to-object mesh alignment by test-time pose optimization.

pub mod geometry;
pub mod hparams;
pub mod guidance;
pub mod harness;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod optimizer;
pub mod pose;
pub mod render;
pub mod scalar;

pub use scalar::Real;
