//! Geometry-only baseline: translate the source until it touches the target.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::geometry::distance::{closest_point_on_triangle, ray_triangle};
use crate::geometry::{compute_stats, TriMesh};
use crate::linalg::Vec3;
use crate::pose::PoseParams;

/// Unique undirected edges.
fn edges(mesh: &TriMesh<f64>) -> Vec<[usize; 2]> {
    let set: BTreeSet<[usize; 2]> = mesh
        .faces
        .iter()
        .flat_map(|f| (0..3).map(move |k| [f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3])]))
        .collect();
    set.into_iter().collect()
}

/// Closest points `(p, q)` on segments `p0p1` and `q0q1`.
fn closest_segment_points(p0: Vec3<f64>, p1: Vec3<f64>, q0: Vec3<f64>, q1: Vec3<f64>) -> (Vec3<f64>, Vec3<f64>) {
    let d1 = p1 - p0;
    let d2 = q1 - q0;
    let r = p0 - q0;
    let (a, e, f) = (d1.dot(d1), d2.dot(d2), d2.dot(r));
    let c = d1.dot(r);
    let b = d1.dot(d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-14 * a * e { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
    let mut t = if e > 0.0 { (b * s + f) / e } else { 0.0 };
    if t < 0.0 {
        t = 0.0;
        s = if a > 0.0 { (-c / a).clamp(0.0, 1.0) } else { 0.0 };
    } else if t > 1.0 {
        t = 1.0;
        s = if a > 0.0 { ((b - c) / a).clamp(0.0, 1.0) } else { 0.0 };
    }
    (p0 + d1 * s, q0 + d2 * t)
}

/// Vector `q - p` of the closest pair with `p` on `a` and `q` on `b`,
/// over vertex-triangle pairs in both directions and edge-edge pairs.
pub fn closest_pair_vector(a: &TriMesh<f64>, b: &TriMesh<f64>) -> Vec3<f64> {
    let vertex_to_surface = |from: &TriMesh<f64>, to: &TriMesh<f64>, sign: f64| {
        from.vertices
            .par_iter()
            .map(|&p| {
                (0..to.faces.len())
                    .map(|f| {
                        let [x, y, z] = to.triangle(f);
                        (closest_point_on_triangle(p, x, y, z) - p) * sign
                    })
                    .min_by(|u, v| u.norm_squared().total_cmp(&v.norm_squared()))
                    .unwrap_or(Vec3::splat(f64::INFINITY))
            })
            .min_by(|u, v| u.norm_squared().total_cmp(&v.norm_squared()))
            .unwrap_or(Vec3::splat(f64::INFINITY))
    };
    let ab = vertex_to_surface(a, b, 1.0);
    let ba = vertex_to_surface(b, a, -1.0);
    let (ea, eb) = (edges(a), edges(b));
    let ee = ea
        .par_iter()
        .map(|&[i, j]| {
            eb.iter()
                .map(|&[k, l]| {
                    let (p, q) = closest_segment_points(a.vertices[i], a.vertices[j], b.vertices[k], b.vertices[l]);
                    q - p
                })
                .min_by(|u, v| u.norm_squared().total_cmp(&v.norm_squared()))
                .unwrap_or(Vec3::splat(f64::INFINITY))
        })
        .min_by(|u, v| u.norm_squared().total_cmp(&v.norm_squared()))
        .unwrap_or(Vec3::splat(f64::INFINITY));
    [ab, ba, ee].into_iter().min_by(|u, v| u.norm_squared().total_cmp(&v.norm_squared())).expect("three candidates")
}

/// Parity test along a fixed skew ray.
pub fn point_inside(mesh: &TriMesh<f64>, p: Vec3<f64>) -> bool {
    let dir = Vec3::new(0.5773, 0.5774, 0.5775).normalized();
    let hits = (0..mesh.faces.len()).filter(|&f| ray_triangle(p, dir, mesh.triangle(f)).is_some()).count();
    hits % 2 == 1
}

/// True when some vertex of either mesh lies inside the other by more than `tol`.
fn overlapping(a: &TriMesh<f64>, b: &TriMesh<f64>, tol: f64) -> bool {
    let deep = |from: &TriMesh<f64>, into: &TriMesh<f64>| {
        from.vertices.par_iter().any(|&p| {
            point_inside(into, p)
                && (0..into.faces.len()).all(|f| {
                    let [x, y, z] = into.triangle(f);
                    (closest_point_on_triangle(p, x, y, z) - p).norm_squared() > tol * tol
                })
        })
    };
    deep(a, b) || deep(b, a)
}

/// Shortest distance `a` travels along `dir` before touching `b`, measured
/// by casting rays from the vertices of each mesh.
fn directional_gap(a: &TriMesh<f64>, b: &TriMesh<f64>, dir: Vec3<f64>) -> Option<f64> {
    let cast = |from: &TriMesh<f64>, to: &TriMesh<f64>, d: Vec3<f64>| {
        from.vertices
            .par_iter()
            .filter_map(|&p| (0..to.faces.len()).filter_map(|f| ray_triangle(p, d, to.triangle(f))).min_by(f64::total_cmp))
            .min_by(f64::total_cmp)
    };
    [cast(a, b, dir), cast(b, a, -dir)].into_iter().flatten().min_by(f64::total_cmp)
}

fn search_directions(a: &TriMesh<f64>, b: &TriMesh<f64>) -> Vec<Vec3<f64>> {
    let mut dirs = Vec::new();
    let away = compute_stats(a).centroid - compute_stats(b).centroid;
    if away.norm() > 0.0 {
        dirs.push(away.normalized());
    }
    for x in -1..=1 {
        for y in -1..=1 {
            for z in -1..=1 {
                if (x, y, z) != (0, 0, 0) {
                    dirs.push(Vec3::new(x as f64, y as f64, z as f64).normalized());
                }
            }
        }
    }
    dirs
}

/// Translation-only pose that brings `source` into contact with `target`.
///
/// Disjoint meshes move along their closest-pair vector, which touches
/// without crossing. Overlapping meshes are pushed out along the candidate
/// direction (26 lattice directions plus centroid-to-centroid) that needs the
/// shortest move to reach last contact.
pub fn snap_baseline(source: &TriMesh<f64>, target: &TriMesh<f64>) -> PoseParams<f64> {
    if source.is_empty() || target.is_empty() {
        return PoseParams::identity();
    }
    let sa = compute_stats(source);
    let sb = compute_stats(target);
    let (lo, hi) = sa.union_aabb(&sb);
    let diag = (hi - lo).norm();
    if !overlapping(source, target, 1e-6 * diag) {
        return PoseParams::translation(closest_pair_vector(source, target));
    }
    let mut best: Option<Vec3<f64>> = None;
    for d in search_directions(source, target) {
        // Far enough along d that the projections separate.
        let proj = |m: &TriMesh<f64>| m.vertices.iter().map(|v| v.dot(d)).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        let (slo, _) = proj(source);
        let (_, thi) = proj(target);
        let far = (thi - slo).max(0.0) + 0.1 * diag;
        let moved: TriMesh<f64> = TriMesh { vertices: source.vertices.iter().map(|v| *v + d * far).collect(), ..source.clone() };
        let Some(gap) = directional_gap(&moved, target, -d) else { continue };
        let shift = d * (far - gap);
        if best.is_none_or(|b| shift.norm() < b.norm()) {
            best = Some(shift);
        }
    }
    PoseParams::translation(best.unwrap_or(Vec3::zero()))
}
