//! Physical plausibility and semantic evaluation of final alignments.

mod voxel;

pub use voxel::{inside_mask, VoxelGrid};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::distance::TriangleIndex;
use crate::geometry::{compute_stats, is_watertight, Role, TriMesh};
use crate::guidance::{GuidanceProvider, GuidanceTarget};
use crate::linalg::Vec3;
use crate::render::{ring, Camera, RenderedView, RigSchedule, Shading};
use crate::scalar::Real;

pub const DEFAULT_VOXEL_RESOLUTION: usize = 128;
pub const DEFAULT_EVAL_VIEWS: usize = 8;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("union volume is zero")]
    EmptyUnion,
    #[error("invalid metric input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub intersection_volume: f64,
    pub union_volume: f64,
    pub ratio: f64,
    pub voxel_resolution: usize,
    pub watertight_flags: (bool, bool),
}

/// Volumetric intersection over union of two solids, by voxelizing their
/// joint bounding box at `resolution` cells per axis.
pub fn intersection_ratio<T: Real>(mesh_a: &TriMesh<T>, mesh_b: &TriMesh<T>, resolution: usize) -> Result<IntersectionReport, MetricsError> {
    if resolution == 0 {
        return Err(MetricsError::Invalid("resolution must be positive".into()));
    }
    let flags = (is_watertight(&mesh_a.faces), is_watertight(&mesh_b.faces));
    if !flags.0 || !flags.1 {
        log::warn!("intersection ratio on non-watertight input ({}, {}); parity inside tests may be unreliable", mesh_a.name, mesh_b.name);
    }
    let a: Vec<Vec3<f64>> = mesh_a.vertices.iter().map(|v| v.cast()).collect();
    let b: Vec<Vec3<f64>> = mesh_b.vertices.iter().map(|v| v.cast()).collect();
    let mut all = a.clone();
    all.extend_from_slice(&b);
    if all.is_empty() {
        return Err(MetricsError::EmptyUnion);
    }
    let grid = VoxelGrid::enclosing(&all, resolution);
    let in_a = inside_mask(&a, &mesh_a.faces, &grid);
    let in_b = inside_mask(&b, &mesh_b.faces, &grid);
    let (inter, union) = in_a
        .par_chunks(resolution * resolution)
        .zip(in_b.par_chunks(resolution * resolution))
        .map(|(sa, sb)| {
            sa.iter().zip(sb).fold((0u64, 0u64), |(i, u), (&x, &y)| (i + u64::from(x && y), u + u64::from(x || y)))
        })
        .reduce(|| (0, 0), |p, q| (p.0 + q.0, p.1 + q.1));
    if union == 0 {
        return Err(MetricsError::EmptyUnion);
    }
    let cell = grid.cell_volume();
    Ok(IntersectionReport {
        intersection_volume: inter as f64 * cell,
        union_volume: union as f64 * cell,
        ratio: inter as f64 / union as f64,
        voxel_resolution: resolution,
        watertight_flags: flags,
    })
}

/// Fraction of source vertices whose distance to the target surface is below `epsilon`.
pub fn contact_fraction<T: Real>(source: &TriMesh<T>, target: &TriMesh<T>, epsilon: T) -> Result<f64, MetricsError> {
    if !(epsilon > T::zero()) {
        return Err(MetricsError::Invalid("epsilon must be positive".into()));
    }
    if source.vertices.is_empty() || target.faces.is_empty() {
        return Ok(0.0);
    }
    let index = TriangleIndex::new(target, epsilon);
    let eps2 = epsilon * epsilon;
    let hits = source
        .vertices
        .par_iter()
        .filter(|p| index.nearby_distance_sq(**p).is_some_and(|d| d < eps2))
        .count();
    Ok(hits as f64 / source.vertices.len() as f64)
}

/// Fixed evaluation cameras, separate from the optimization rig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalRig {
    /// Distance as a multiple of the scene bounding-box diagonal.
    pub distance_factor: f64,
    pub elevation_deg: f64,
    pub azimuth_offset_deg: f64,
    pub vertical_fov_deg: f64,
    pub width: usize,
    pub height: usize,
    pub softness_px: f64,
}

impl Default for EvalRig {
    fn default() -> Self {
        Self {
            distance_factor: 1.4,
            elevation_deg: 30.0,
            azimuth_offset_deg: 22.5,
            vertical_fov_deg: 45.0,
            width: 224,
            height: 224,
            softness_px: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticReport {
    pub per_view_scores: Vec<f64>,
    /// None when the provider was unavailable.
    pub mean_score: Option<f64>,
    pub num_views: usize,
    pub provider_id: String,
    /// False when the provider failed; scores are then empty.
    pub available: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Centroid of the source-role vertices, or of the whole scene when it has none.
fn source_centroid<T: Real>(scene: &TriMesh<T>) -> Vec3<T> {
    let mask = scene.role_mask(Role::Source);
    let pts: Vec<Vec3<T>> = scene.vertices.iter().zip(&mask).filter(|(_, m)| **m).map(|(v, _)| *v).collect();
    if pts.is_empty() {
        return compute_stats(scene).centroid;
    }
    pts.iter().fold(Vec3::zero(), |a, p| a + *p) * (T::one() / T::count(pts.len()))
}

/// The fixed evaluation cameras: a ring centred on the source at
/// `rig.distance_factor` scene diagonals.
pub fn eval_cameras<T: Real>(scene: &TriMesh<T>, num_views: usize, rig: &EvalRig) -> Result<Vec<Camera<T>>, MetricsError> {
    if num_views == 0 || scene.is_empty() {
        return Err(MetricsError::Invalid("semantic evaluation needs a non-empty scene and at least one view".into()));
    }
    let diag = compute_stats(scene).diagonal();
    if !(diag > T::zero()) {
        return Err(MetricsError::Invalid("scene has a degenerate bounding box".into()));
    }
    let schedule = RigSchedule {
        num_views,
        elevation_deg: rig.elevation_deg,
        vertical_fov_deg: rig.vertical_fov_deg,
        width: rig.width,
        height: rig.height,
        azimuth_offset_deg: rig.azimuth_offset_deg,
        ..RigSchedule::default()
    };
    ring(source_centroid(scene), diag * T::lit(rig.distance_factor), Vec3::new(T::zero(), T::one(), T::zero()), &schedule)
        .map_err(|e| MetricsError::Invalid(e.to_string()))
}

/// Scores the composed scene from the fixed evaluation cameras without
/// gradients. Provider failures yield an unavailable report.
pub fn semantic_eval<T: Real>(
    scene: &TriMesh<T>,
    target_spec: &GuidanceTarget,
    provider: &dyn GuidanceProvider<T>,
    num_views: usize,
    rig: &EvalRig,
    shading: &Shading,
) -> Result<SemanticReport, MetricsError> {
    let cams = eval_cameras(scene, num_views, rig)?;
    let unavailable = |e: String| SemanticReport {
        per_view_scores: Vec::new(),
        mean_score: None,
        num_views,
        provider_id: provider.id(),
        available: false,
        error: Some(e),
    };
    let softness = T::lit(rig.softness_px);
    let views = match cams.par_iter().map(|c| RenderedView::render(scene, c, softness, shading)).collect::<Result<Vec<_>, _>>() {
        Ok(v) => v,
        Err(e) => return Ok(unavailable(e.to_string())),
    };
    match provider.evaluate(target_spec, &views, false) {
        Ok(r) if r.per_view_scores.len() == num_views => {
            let scores: Vec<f64> = r.per_view_scores.iter().map(|s| s.as_f64()).collect();
            let mean = scores.iter().sum::<f64>() / num_views as f64;
            Ok(SemanticReport { per_view_scores: scores, mean_score: Some(mean), num_views, provider_id: r.provider_id, available: true, error: None })
        }
        Ok(r) => Ok(unavailable(format!("{} scores for {num_views} views", r.per_view_scores.len()))),
        Err(e) => Ok(unavailable(e.to_string())),
    }
}
