//! Phased test-time pose optimization with restarts.

mod adam;
mod config;
mod init;
mod problem;
mod run;

pub use adam::Adam;
pub use config::{
    geometric_ramp, AdamConfig, AlignConfig, AlignMode, InitStrategy, JitterConfig, PhaseSchedule, Selector, DEFAULT_PHASES,
    DEFAULT_RESTARTS, DEFAULT_TOTAL_STEPS, RAMP_FACTOR,
};
pub use init::{
    perturbation_about, random_initial_pose, restart_rng, restart_seed, sample_initial_pose, PERTURB_EULER_DEG, PERTURB_SCALE_RANGE,
    PERTURB_TRANSLATION_SIDES,
};
pub use problem::{AlignmentProblem, Evaluation, PhaseContext};
pub use run::{apply_size_ratio, run_alignment, run_phase, run_restart, OptimState, PhaseRecord, RestartFailure, RestartResult, RunResult, StepRecord};

use crate::guidance::GuidanceError;
use crate::losses::LossError;
use crate::pose::PoseError;
use crate::render::RenderError;

#[derive(Debug, thiserror::Error)]
pub enum OptimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("all restarts failed: {}", .0.iter().map(|(i, e)| format!("#{i}: {e}")).collect::<Vec<_>>().join("; "))]
    AllRestartsFailed(Vec<(usize, String)>),
}

impl OptimError {
    /// True when the failure traces back to an unreachable guidance provider.
    pub fn is_guidance_unavailable(&self) -> bool {
        match self {
            OptimError::Guidance(e) => e.is_retriable(),
            OptimError::AllRestartsFailed(causes) => causes.iter().all(|(_, e)| e.starts_with("guidance provider unavailable")),
            _ => false,
        }
    }
}
