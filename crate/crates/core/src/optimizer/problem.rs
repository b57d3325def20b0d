use rayon::prelude::*;

use super::config::AlignConfig;
use super::OptimError;
use crate::geometry::{compute_stats, compute_vertex_normals, MeshStats, TriMesh};
use crate::guidance::{clip_loss_from_scores, GuidanceError, GuidanceProvider, GuidanceTarget};
use crate::linalg::Vec3;
use crate::losses::{fractional_soft_icp, penetration_loss, total_objective, IcpConfig, LossBreakdown, LossTerm, LossWeights, PenetrationConfig};
use crate::pose::{apply_pose, backprop_pose, compose_scene, PoseGradient, PoseParams};
use crate::render::{backprop_render, build_rig, Camera, Image, RenderedView};
use crate::scalar::Real;

/// Cameras and rasterizer softness fixed for one phase.
#[derive(Debug, Clone)]
pub struct PhaseContext<T> {
    pub phase: usize,
    pub rig: Vec<Camera<T>>,
    pub softness: T,
}

/// Objective value, its parts, and its pose gradient at one pose.
#[derive(Debug, Clone)]
pub struct Evaluation<T> {
    pub breakdown: LossBreakdown<T>,
    /// Objective under the final phase's weights, used for best-pose selection.
    pub selection_objective: T,
    pub gradient: Option<PoseGradient<T>>,
    pub scores: Option<Vec<T>>,
}

/// Meshes, guidance and configuration shared by every restart.
pub struct AlignmentProblem<'a, T: Real> {
    pub source: &'a TriMesh<T>,
    pub target: &'a TriMesh<T>,
    pub guidance: &'a dyn GuidanceProvider<T>,
    pub guidance_target: &'a GuidanceTarget,
    pub config: &'a AlignConfig,
    pub target_stats: MeshStats<T>,
    pub target_normals: Vec<Vec3<T>>,
    pub target_diag: T,
    pub icp: IcpConfig<T>,
    pub penetration: PenetrationConfig<T>,
}

impl<'a, T: Real> AlignmentProblem<'a, T> {
    pub fn new(
        source: &'a TriMesh<T>,
        target: &'a TriMesh<T>,
        guidance: &'a dyn GuidanceProvider<T>,
        guidance_target: &'a GuidanceTarget,
        config: &'a AlignConfig,
    ) -> Result<Self, OptimError> {
        config.validate()?;
        if source.is_empty() || target.is_empty() {
            return Err(OptimError::InvalidConfig("source and target meshes must be non-empty".into()));
        }
        for m in [source, target] {
            m.check_normals().map_err(|e| OptimError::InvalidConfig(format!("{}: {e}", m.name)))?;
        }
        let target_stats = compute_stats(target);
        let target_diag = target_stats.diagonal();
        if !(target_diag > T::zero()) {
            return Err(OptimError::InvalidConfig("target has a degenerate bounding box".into()));
        }
        let target_normals = match &target.vertex_normals {
            Some(n) => n.clone(),
            None => compute_vertex_normals(target).normals,
        };
        let sigma = T::lit(config.icp_sigma.unwrap_or(0.05 * target_diag.as_f64()));
        let margin = T::lit(config.penetration_margin.unwrap_or(0.01 * target_diag.as_f64()));
        Ok(Self {
            source,
            target,
            guidance,
            guidance_target,
            config,
            target_stats,
            target_normals,
            target_diag,
            icp: IcpConfig { ratio: T::lit(config.icp_ratio), sigma },
            penetration: PenetrationConfig { margin },
        })
    }

    /// Effective weights for `phase` (1-based), after unit normalization and
    /// the penetration policy.
    pub fn weights_for_phase(&self, phase: usize) -> LossWeights<T> {
        let s = &self.config.schedule;
        let d = self.target_diag.as_f64();
        let (icp_norm, pen_norm) = if self.config.normalize_weights { (1.0 / (d * d), 1.0 / d) } else { (1.0, 1.0) };
        LossWeights {
            lambda_clip: T::lit(s.lambda_clip),
            lambda_icp: T::lit(s.lambda_icp[phase - 1] * icp_norm),
            lambda_pen: if self.config.allow_penetration { T::zero() } else { T::lit(s.lambda_pen[phase - 1] * pen_norm) },
        }
    }

    pub fn final_weights(&self) -> LossWeights<T> {
        self.weights_for_phase(self.config.schedule.num_phases)
    }

    /// Rig and softness for `phase`, built from the source placement at `pose`.
    pub fn phase_context(&self, pose: &PoseParams<T>, phase: usize) -> Result<PhaseContext<T>, OptimError> {
        let posed = apply_pose(self.source, pose)?;
        let s_stats = compute_stats(&posed);
        let rig = build_rig(&self.target_stats, &s_stats, phase, &self.config.schedule.rig, s_stats.centroid)?;
        Ok(PhaseContext { phase, rig, softness: T::lit(self.config.schedule.softness_for_phase(phase)) })
    }

    fn guidance_with_retries(
        &self,
        views: &[RenderedView<T>],
        want_grads: bool,
    ) -> Result<crate::guidance::GuidanceResult<T>, GuidanceError> {
        let mut attempt = 0;
        loop {
            match self.guidance.evaluate(self.guidance_target, views, want_grads) {
                Err(e) if e.is_retriable() && attempt < self.config.guidance_retries => attempt += 1,
                other => return other,
            }
        }
    }

    /// Guidance term and its gradient on the posed source vertices.
    pub fn clip_term(&self, posed: &TriMesh<T>, ctx: &PhaseContext<T>, want_grad: bool) -> Result<(LossTerm<T>, Vec<T>), OptimError> {
        let n = posed.vertex_count();
        if ctx.rig.is_empty() || !self.guidance.renders() {
            return Ok((LossTerm::zero(n), vec![T::zero(); ctx.rig.len()]));
        }
        let scene = compose_scene(self.target, posed);
        let shading = &self.config.shading;
        let views = ctx
            .rig
            .par_iter()
            .map(|cam| RenderedView::render(&scene, cam, ctx.softness, shading))
            .collect::<Result<Vec<_>, _>>()?;
        let result = self.guidance_with_retries(&views, want_grad)?;
        if result.per_view_scores.len() != views.len() {
            return Err(OptimError::Guidance(GuidanceError::Malformed("score count does not match view count".into())));
        }
        let value = clip_loss_from_scores(&result);
        let mut d_source = vec![Vec3::zero(); n];
        if want_grad {
            if result.per_view_pixel_grads.len() != views.len() {
                return Err(OptimError::Guidance(GuidanceError::Malformed("gradient count does not match view count".into())));
            }
            let inv_n = -T::one() / T::count(views.len());
            let per_view = ctx
                .rig
                .par_iter()
                .zip(&result.per_view_pixel_grads)
                .map(|(cam, g)| {
                    let d_rgba = Image { width: g.width, height: g.height, channels: 4, data: g.data.iter().map(|v| *v * inv_n).collect() };
                    backprop_render(&scene, cam, ctx.softness, shading, &d_rgba)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let offset = scene.vertex_count() - n;
            for grads in &per_view {
                for (d, g) in d_source.iter_mut().zip(&grads[offset..]) {
                    *d += *g;
                }
            }
        }
        Ok((LossTerm { value, d_source }, result.per_view_scores))
    }

    /// Full objective at `pose` with `weights`; terms whose current and final
    /// weights are both zero are skipped.
    pub fn evaluate(
        &self,
        pose: &PoseParams<T>,
        ctx: &PhaseContext<T>,
        weights: &LossWeights<T>,
        want_grad: bool,
    ) -> Result<Evaluation<T>, OptimError> {
        let fin = self.final_weights();
        let posed = apply_pose(self.source, pose)?;
        let n = posed.vertex_count();
        let zero = T::zero();

        let (clip, scores) = if weights.lambda_clip > zero || fin.lambda_clip > zero {
            let (t, s) = self.clip_term(&posed, ctx, want_grad && weights.lambda_clip > zero)?;
            (t, Some(s))
        } else {
            (LossTerm::zero(n), None)
        };
        let icp = if weights.lambda_icp > zero || fin.lambda_icp > zero {
            fractional_soft_icp(&posed.vertices, &self.target.vertices, &self.icp)?
        } else {
            LossTerm::zero(n)
        };
        let pen = if weights.lambda_pen > zero || fin.lambda_pen > zero {
            penetration_loss(&posed.vertices, &self.target.vertices, &self.target_normals, &self.penetration)?
        } else {
            LossTerm::zero(n)
        };
        let breakdown = total_objective(&clip, &icp, &pen, weights)?;
        let selection_objective = fin.combine(clip.value, icp.value, pen.value);
        let gradient = if want_grad { Some(backprop_pose(&self.source.vertices, pose, &breakdown.d_source_vertices)?) } else { None };
        Ok(Evaluation { breakdown, selection_objective, gradient, scores })
    }
}
