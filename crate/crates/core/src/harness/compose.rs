//! Iterative multi-object assembly: each stage aligns one mesh against
//! everything placed before it.

use serde::Serialize;

use super::HarnessError;
use crate::geometry::{Role, TriMesh};
use crate::guidance::{GuidanceProvider, GuidanceTarget};
use crate::optimizer::{run_alignment, AlignConfig, RunResult};
use crate::pose::{apply_pose, compose_scene, PoseParams};

/// One object to place. The first stage is placed as-is at `initial_pose`.
#[derive(Debug, Clone)]
pub struct Stage {
    pub mesh: TriMesh<f64>,
    pub prompt: String,
    pub initial_pose: PoseParams<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub index: usize,
    pub name: String,
    pub prompt: String,
    /// Vertices of the scene this stage was aligned against.
    pub target_vertex_count: usize,
    pub pose: PoseParams<f64>,
    /// Absent for the first stage, which is not optimized.
    pub result: Option<RunResult>,
}

#[derive(Debug, Clone)]
pub struct ComposeResult {
    /// Every placed object as a named part.
    pub scene: TriMesh<f64>,
    pub stages: Vec<StageRecord>,
}

/// A failed stage together with everything placed before it.
#[derive(Debug)]
pub struct ComposeFailure {
    pub stage: usize,
    pub error: HarnessError,
    pub partial: ComposeResult,
}

/// Builds the guidance provider for stage `k` given the scene it aligns against.
pub type ProviderFactory<'a> = dyn FnMut(usize, &TriMesh<f64>) -> Result<Box<dyn GuidanceProvider<f64>>, HarnessError> + 'a;

/// Places `stages[0]`, then aligns each later stage against the composition
/// of all earlier ones. Stage `k` uses master seed `config.master_seed + k - 1`.
pub fn compose_iterative(stages: &[Stage], config: &AlignConfig, provider_for: &mut ProviderFactory<'_>) -> Result<ComposeResult, Box<ComposeFailure>> {
    let mut out = ComposeResult { scene: TriMesh::empty("scene"), stages: Vec::new() };
    let fail = |stage: usize, error: HarnessError, partial: ComposeResult| Box::new(ComposeFailure { stage, error, partial });
    if stages.len() < 2 {
        return Err(fail(0, HarnessError::Invalid("composition needs at least two stages".into()), out));
    }
    let first = &stages[0];
    let placed = match apply_pose(&first.mesh, &first.initial_pose) {
        Ok(m) => m,
        Err(e) => return Err(fail(0, e.into(), out)),
    };
    out.scene = placed.with_role(Role::Target);
    out.scene.name = "scene".into();
    out.stages.push(StageRecord {
        index: 0,
        name: first.mesh.name.clone(),
        prompt: first.prompt.clone(),
        target_vertex_count: 0,
        pose: first.initial_pose,
        result: None,
    });

    for (k, stage) in stages.iter().enumerate().skip(1) {
        let mut cfg = config.clone();
        cfg.master_seed = config.master_seed.wrapping_add(k as u64 - 1);
        let mut attempt = || -> Result<(RunResult, TriMesh<f64>), HarnessError> {
            let provider = provider_for(k, &out.scene)?;
            let result = run_alignment(&stage.mesh, &out.scene, &GuidanceTarget::text(&stage.prompt), provider.as_ref(), &cfg, &stage.initial_pose)?;
            let posed = apply_pose(&stage.mesh, &result.best_pose)?;
            Ok((result, posed))
        };
        match attempt() {
            Ok((result, posed)) => {
                let target_vertex_count = out.scene.vertex_count();
                let mut scene = compose_scene(&out.scene, &posed).with_role(Role::Target);
                scene.name = "scene".into();
                out.scene = scene;
                out.stages.push(StageRecord {
                    index: k,
                    name: stage.mesh.name.clone(),
                    prompt: stage.prompt.clone(),
                    target_vertex_count,
                    pose: result.best_pose,
                    result: Some(result),
                });
            }
            Err(e) => return Err(fail(k, e, out)),
        }
    }
    Ok(out)
}
