use serde::{Deserialize, Serialize};

use super::OptimError;
use crate::render::{RigSchedule, Shading};

pub const DEFAULT_TOTAL_STEPS: usize = 2000;
pub const DEFAULT_PHASES: usize = 3;
pub const DEFAULT_RESTARTS: usize = 5;
/// Per-phase multiplier of the geometric weights.
pub const RAMP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    /// Scale is frozen at its initial value.
    Rigid,
    #[default]
    Scaled,
}

/// How phase-best and restart-best poses are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Lowest total objective under the final phase's weights.
    #[default]
    Objective,
    /// Highest mean guidance score on the final phase rig (restarts only).
    GuidanceScore,
}

/// `base * factor^p` for `p = 0..phases`.
pub fn geometric_ramp(base: f64, factor: f64, phases: usize) -> Vec<f64> {
    (0..phases).map(|p| base * factor.powi(p as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseSchedule {
    pub total_steps: usize,
    pub num_phases: usize,
    pub lambda_clip: f64,
    pub lambda_icp: Vec<f64>,
    pub lambda_pen: Vec<f64>,
    pub rig: RigSchedule,
    /// Rasterizer softness in pixels for phase 1.
    pub softness_px: f64,
    /// Per-phase softness multiplier.
    pub softness_decay: f64,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        Self {
            total_steps: DEFAULT_TOTAL_STEPS,
            num_phases: DEFAULT_PHASES,
            lambda_clip: 1.0,
            lambda_icp: geometric_ramp(0.1, RAMP_FACTOR, DEFAULT_PHASES),
            lambda_pen: geometric_ramp(0.01, RAMP_FACTOR, DEFAULT_PHASES),
            rig: RigSchedule::default(),
            softness_px: 1.5,
            softness_decay: 0.5,
        }
    }
}

impl PhaseSchedule {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::InvalidConfig(m));
        if self.num_phases == 0 {
            return bad("at least one phase is required".into());
        }
        if self.total_steps < self.num_phases {
            return bad(format!("{} steps cannot cover {} phases", self.total_steps, self.num_phases));
        }
        for (name, list) in [("lambda_icp", &self.lambda_icp), ("lambda_pen", &self.lambda_pen)] {
            if list.len() != self.num_phases {
                return bad(format!("{name} has {} entries for {} phases", list.len(), self.num_phases));
            }
            if list.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return bad(format!("{name} entries must be finite and non-negative"));
            }
            if list.windows(2).any(|w| w[1] < w[0]) {
                return bad(format!("{name} must be non-decreasing across phases"));
            }
        }
        if !(self.lambda_clip >= 0.0) || !self.lambda_clip.is_finite() {
            return bad("lambda_clip must be finite and non-negative".into());
        }
        if self.rig.phases() != self.num_phases {
            return bad(format!("rig schedule has {} phases, expected {}", self.rig.phases(), self.num_phases));
        }
        self.rig.validate().map_err(|e| OptimError::InvalidConfig(e.to_string()))?;
        if !(self.softness_px > 0.0) || !(self.softness_decay > 0.0) {
            return bad("softness and its decay must be positive".into());
        }
        Ok(())
    }

    /// Steps in `phase` (1-based); the remainder goes to the earliest phases.
    pub fn steps_for_phase(&self, phase: usize) -> usize {
        let base = self.total_steps / self.num_phases;
        base + usize::from(phase - 1 < self.total_steps % self.num_phases)
    }

    pub fn softness_for_phase(&self, phase: usize) -> f64 {
        self.softness_px * self.softness_decay.powi(phase as i32 - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Clear the moment estimates at each phase start.
    pub reset_per_phase: bool,
    /// Learning-rate multipliers for translation, quaternion and log-scale.
    pub group_lr_scale: [f64; 3],
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 5e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8, reset_per_phase: true, group_lr_scale: [1.0; 3] }
    }
}

impl AdamConfig {
    /// Multipliers expanded to the 8 pose parameters.
    pub fn lr_scale_vector(&self) -> Vec<f64> {
        let [t, q, l] = self.group_lr_scale;
        vec![t, t, t, q, q, q, q, l]
    }
}

/// Standard deviations of the per-step Gaussian perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterConfig {
    /// Translation, as a fraction of the target bbox diagonal.
    pub tau_fraction: f64,
    pub quat: f64,
    pub log_scale: f64,
    pub decay_per_phase: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { tau_fraction: 0.002, quat: 0.002, log_scale: 0.002, decay_per_phase: 0.5 }
    }
}

impl JitterConfig {
    pub fn none() -> Self {
        Self { tau_fraction: 0.0, quat: 0.0, log_scale: 0.0, decay_per_phase: 1.0 }
    }
}

/// How each restart's starting pose is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitStrategy {
    /// Start every restart from the base pose.
    Base,
    /// Uniform translation offset per axis within `max_fraction` of the target's bbox side on that axis.
    TranslationOffset { max_fraction: f64 },
    /// Random rotation about the vertical axis through the source centroid, plus a translation offset.
    YawAndOffset { max_fraction: f64 },
    /// The benchmark perturbation protocol applied about the source centroid.
    Protocol { mode: AlignMode },
}

impl Default for InitStrategy {
    fn default() -> Self {
        InitStrategy::YawAndOffset { max_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub mode: AlignMode,
    pub schedule: PhaseSchedule,
    pub adam: AdamConfig,
    pub jitter: JitterConfig,
    pub restarts: usize,
    pub master_seed: u64,
    /// Fraction r of source vertices eligible for attachment.
    pub icp_ratio: f64,
    /// Softmax temperature; defaults to 0.05 x target bbox diagonal.
    pub icp_sigma: Option<f64>,
    /// Admissible indentation; defaults to 0.01 x target bbox diagonal.
    pub penetration_margin: Option<f64>,
    /// Drops the penetration term in every phase.
    pub allow_penetration: bool,
    pub selector: Selector,
    /// Divide the soft-ICP weight by diag^2 and the penetration weight by
    /// diag so default weights do not depend on model units.
    pub normalize_weights: bool,
    pub guidance_retries: usize,
    pub shading: Shading,
    pub init: InitStrategy,
    /// Target-to-source size ratio used to set the initial scale (scaled mode only).
    pub size_ratio: Option<f64>,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            mode: AlignMode::Scaled,
            schedule: PhaseSchedule::default(),
            adam: AdamConfig::default(),
            jitter: JitterConfig::default(),
            restarts: DEFAULT_RESTARTS,
            master_seed: 0,
            icp_ratio: 0.3,
            icp_sigma: None,
            penetration_margin: None,
            allow_penetration: false,
            selector: Selector::Objective,
            normalize_weights: true,
            guidance_retries: 2,
            shading: Shading::default(),
            init: InitStrategy::default(),
            size_ratio: None,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        self.schedule.validate()?;
        let bad = |m: &str| Err(OptimError::InvalidConfig(m.to_string()));
        if self.restarts == 0 {
            return bad("at least one restart is required");
        }
        if !(self.icp_ratio > 0.0 && self.icp_ratio <= 1.0) {
            return bad("icp_ratio must lie in (0, 1]");
        }
        if self.icp_sigma.is_some_and(|s| !(s > 0.0)) {
            return bad("icp_sigma must be positive");
        }
        if self.penetration_margin.is_some_and(|m| !(m >= 0.0)) {
            return bad("penetration_margin must be non-negative");
        }
        if self.size_ratio.is_some_and(|s| !(s > 0.0)) {
            return bad("size_ratio must be positive");
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0)
            || a.group_lr_scale.iter().any(|v| !(*v >= 0.0) || !v.is_finite())
        {
            return bad("invalid Adam hyperparameters");
        }
        let j = &self.jitter;
        if [j.tau_fraction, j.quat, j.log_scale].iter().any(|v| !(*v >= 0.0)) || !(j.decay_per_phase > 0.0) {
            return bad("jitter deviations must be non-negative");
        }
        self.shading.validate().map_err(|e| OptimError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}
