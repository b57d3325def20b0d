use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::{AlignConfig, AlignMode, Selector};
use super::init::{perturbation_about, restart_rng, restart_seed, sample_initial_pose};
use super::problem::{AlignmentProblem, PhaseContext};
use super::OptimError;
use crate::geometry::{compute_stats, TriMesh};
use crate::guidance::{GuidanceProvider, GuidanceTarget};
use crate::linalg::{Quat, Vec3};
use crate::pose::{apply_pose, PoseParams};
use crate::scalar::Real;

/// One logged objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub restart: usize,
    pub phase: usize,
    /// Global step index within the restart.
    pub step: usize,
    /// False for the extra evaluation after a phase's last update.
    pub update: bool,
    pub total: f64,
    pub clip_term: f64,
    pub icp_term: f64,
    pub pen_term: f64,
    pub selection_objective: f64,
    pub pose: PoseParams<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub steps: usize,
    pub initial_pose: PoseParams<f64>,
    pub best_pose: PoseParams<f64>,
    pub best_objective: f64,
    pub best_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub index: usize,
    pub seed: u64,
    pub initial_pose: PoseParams<f64>,
    pub best_pose: PoseParams<f64>,
    pub best_objective: f64,
    /// Mean guidance score of the best pose, when the score selector ran.
    pub mean_score: Option<f64>,
    pub phases: Vec<PhaseRecord>,
    #[serde(skip)]
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub best_pose: PoseParams<f64>,
    pub best_objective: f64,
    pub restart_index: usize,
    pub selector: Selector,
    pub restarts: Vec<RestartResult>,
    pub failures: Vec<RestartFailure>,
}

impl RunResult {
    pub fn best_restart(&self) -> &RestartResult {
        self.restarts.iter().find(|r| r.index == self.restart_index).expect("best restart is present")
    }

    pub fn per_step_log(&self) -> &[StepRecord] {
        &self.best_restart().steps
    }

    pub fn phase_trajectory(&self) -> Vec<PoseParams<f64>> {
        self.best_restart().phases.iter().map(|p| p.best_pose).collect()
    }

    /// Every restart's step records as JSON lines, in restart order.
    pub fn steps_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.restarts {
            for s in &r.steps {
                out.push_str(&serde_json::to_string(s).expect("step record serializes"));
                out.push('\n');
            }
        }
        out
    }
}

/// Optimizer state carried through the steps of a restart.
#[derive(Debug, Clone)]
pub struct OptimState<T = f64> {
    pub pose: PoseParams<T>,
    pub adam: Adam<T>,
    pub step_count: usize,
    /// Jitter deviations for translation (absolute), quaternion and log-scale.
    pub jitter_std: [T; 3],
}

impl<T: Real> OptimState<T> {
    pub fn new(pose: PoseParams<T>, config: &AlignConfig, target_diag: T) -> Self {
        let a = &config.adam;
        let j = &config.jitter;
        Self {
            pose,
            adam: Adam::new(8, T::lit(a.lr), T::lit(a.beta1), T::lit(a.beta2), T::lit(a.eps))
                .with_lr_scale(a.lr_scale_vector().into_iter().map(T::lit).collect()),
            step_count: 0,
            jitter_std: [target_diag * T::lit(j.tau_fraction), T::lit(j.quat), T::lit(j.log_scale)],
        }
    }
}

fn record<T: Real>(restart: usize, phase: usize, step: usize, update: bool, pose: &PoseParams<T>, ev: &super::Evaluation<T>) -> StepRecord {
    let b = &ev.breakdown;
    StepRecord {
        restart,
        phase,
        step,
        update,
        total: b.total.as_f64(),
        clip_term: b.clip_term.as_f64(),
        icp_term: b.icp_term.as_f64(),
        pen_term: b.pen_term.as_f64(),
        selection_objective: ev.selection_objective.as_f64(),
        pose: pose.cast(),
    }
}

/// Runs one phase from `state.pose` and leaves the phase-best pose in the state.
pub fn run_phase<T: Real>(
    problem: &AlignmentProblem<'_, T>,
    state: &mut OptimState<T>,
    phase: usize,
    rng: &mut ChaCha8Rng,
    restart: usize,
    log: &mut Vec<StepRecord>,
) -> Result<PhaseRecord, OptimError> {
    let cfg = problem.config;
    let steps = cfg.schedule.steps_for_phase(phase);
    state.pose.quat = state.pose.unit_quat()?;
    if cfg.adam.reset_per_phase {
        state.adam.reset();
    }
    let initial_pose = state.pose;
    let ctx: PhaseContext<T> = problem.phase_context(&state.pose, phase)?;
    let weights = problem.weights_for_phase(phase);
    let decay = T::lit(cfg.jitter.decay_per_phase.powi(phase as i32 - 1));
    let sigma = state.jitter_std.map(|s| s * decay);
    let diag = problem.target_diag;
    let frozen = [false, false, false, false, false, false, false, cfg.mode == AlignMode::Rigid];

    let mut best: Option<(PoseParams<T>, T, usize)> = None;
    let mut consider = |pose: PoseParams<T>, obj: T, step: usize| {
        if best.as_ref().is_none_or(|b| obj < b.1) {
            best = Some((pose, obj, step));
        }
    };
    for _ in 0..steps {
        let ev = problem.evaluate(&state.pose, &ctx, &weights, true)?;
        log.push(record(restart, phase, state.step_count, true, &state.pose, &ev));
        consider(state.pose, ev.selection_objective, state.step_count);

        let g = ev.gradient.expect("gradient requested");
        let mut x = state.pose.to_vector();
        let mut gx = g.to_vector();
        for k in 0..3 {
            x[k] /= diag;
            gx[k] *= diag;
        }
        state.adam.step(&mut x, &gx, &frozen);
        for (k, xk) in x.iter_mut().enumerate() {
            let s = match k {
                0..=2 => sigma[0] / diag,
                3..=6 => sigma[1],
                _ => sigma[2],
            };
            if s > T::zero() && !frozen[k] {
                let z: f64 = rng.sample(StandardNormal);
                *xk += s * T::lit(z);
            }
        }
        for xk in x.iter_mut().take(3) {
            *xk *= diag;
        }
        state.pose = PoseParams::from_vector(x);
        state.step_count += 1;
        if !state.pose.is_finite() {
            return Err(OptimError::NonFinite(format!("pose diverged in phase {phase}")));
        }
    }
    let ev = problem.evaluate(&state.pose, &ctx, &weights, false)?;
    log.push(record(restart, phase, state.step_count, false, &state.pose, &ev));
    consider(state.pose, ev.selection_objective, state.step_count);

    let (best_pose, best_objective, best_step) = best.expect("at least one evaluation");
    state.pose = best_pose;
    Ok(PhaseRecord {
        phase,
        steps,
        initial_pose: initial_pose.cast(),
        best_pose: best_pose.cast(),
        best_objective: best_objective.as_f64(),
        best_step,
    })
}

/// All phases of one restart, chained by phase-best poses.
pub fn run_restart<T: Real>(
    problem: &AlignmentProblem<'_, T>,
    index: usize,
    initial: PoseParams<T>,
    rng: &mut ChaCha8Rng,
) -> Result<RestartResult, OptimError> {
    let cfg = problem.config;
    let mut state = OptimState::new(initial, cfg, problem.target_diag);
    let mut steps = Vec::new();
    let mut phases = Vec::new();
    for phase in 1..=cfg.schedule.num_phases {
        phases.push(run_phase(problem, &mut state, phase, rng, index, &mut steps)?);
    }
    let best = steps
        .iter()
        .fold(None::<&StepRecord>, |acc, s| match acc {
            Some(a) if a.selection_objective <= s.selection_objective => Some(a),
            _ => Some(s),
        })
        .expect("steps were logged");
    Ok(RestartResult {
        index,
        seed: restart_seed(cfg.master_seed, index),
        initial_pose: initial.cast(),
        best_pose: best.pose,
        best_objective: best.selection_objective,
        mean_score: None,
        phases,
        steps,
    })
}

/// Base pose rescaled about its source centroid to honour `config.size_ratio`.
pub fn apply_size_ratio<T: Real>(source: &TriMesh<T>, target_diag: T, base: &PoseParams<T>, config: &AlignConfig) -> Result<PoseParams<T>, OptimError> {
    let Some(ratio) = config.size_ratio else {
        return Ok(*base);
    };
    if config.mode == AlignMode::Rigid {
        log::warn!("size ratio {ratio} ignored in rigid mode");
        return Ok(*base);
    }
    let posed = apply_pose(source, base)?;
    let stats = compute_stats(&posed);
    let factor = T::lit(ratio) * target_diag / stats.diagonal();
    let scale = PoseParams { tau: Vec3::zero(), quat: Quat::identity(), log_scale: factor.ln() };
    Ok(base.then(&perturbation_about(stats.centroid, &scale)?)?)
}

/// Best-of-N restarts from `base`. Each restart draws its starting pose
/// with its own RNG stream; restarts that fail are reported, not fatal.
pub fn run_alignment<T: Real>(
    source: &TriMesh<T>,
    target: &TriMesh<T>,
    guidance_target: &GuidanceTarget,
    provider: &dyn GuidanceProvider<T>,
    config: &AlignConfig,
    base: &PoseParams<T>,
) -> Result<RunResult, OptimError> {
    let problem = AlignmentProblem::new(source, target, provider, guidance_target, config)?;
    let base = apply_size_ratio(source, problem.target_diag, base, config)?;
    let posed = apply_pose(source, &base)?;
    let base_stats = compute_stats(&posed);

    let outcomes: Vec<Result<RestartResult, RestartFailure>> = (0..config.restarts)
        .into_par_iter()
        .map(|i| {
            let mut rng = restart_rng(config.master_seed, i);
            let fail = |e: OptimError| RestartFailure { index: i, seed: restart_seed(config.master_seed, i), error: e.to_string() };
            let init = sample_initial_pose(&mut rng, &config.init, &base, &base_stats, &problem.target_stats).map_err(fail)?;
            run_restart(&problem, i, init, &mut rng).map_err(fail)
        })
        .collect();
    let mut restarts = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => restarts.push(r),
            Err(f) => failures.push(f),
        }
    }
    if restarts.is_empty() {
        return Err(OptimError::AllRestartsFailed(failures.into_iter().map(|f| (f.index, f.error)).collect()));
    }

    let chosen = match config.selector {
        Selector::Objective => restarts
            .iter()
            .fold(&restarts[0], |a, r| if r.best_objective < a.best_objective { r } else { a })
            .index,
        Selector::GuidanceScore => {
            let p = config.schedule.num_phases;
            let weights = problem.final_weights();
            for r in restarts.iter_mut() {
                let pose = r.best_pose.cast::<T>();
                let ctx = problem.phase_context(&pose, p)?;
                let ev = problem.evaluate(&pose, &ctx, &weights, false)?;
                let scores = ev.scores.unwrap_or_default();
                let n = scores.len().max(1) as f64;
                r.mean_score = Some(scores.iter().map(|s| s.as_f64()).sum::<f64>() / n);
            }
            restarts
                .iter()
                .fold(&restarts[0], |a, r| if r.mean_score > a.mean_score { r } else { a })
                .index
        }
    };
    let best = restarts.iter().find(|r| r.index == chosen).expect("chosen restart exists");
    Ok(RunResult {
        best_pose: best.best_pose,
        best_objective: best.best_objective,
        restart_index: chosen,
        selector: config.selector,
        failures,
        restarts,
    })
}
