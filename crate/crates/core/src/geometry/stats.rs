use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::mesh::{triangle_area, TriMesh};
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Summary geometry of a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct MeshStats<T = f64> {
    pub aabb_min: Vec3<T>,
    pub aabb_max: Vec3<T>,
    /// Area-weighted surface centroid.
    pub centroid: Vec3<T>,
    pub signed_volume: T,
    pub vertex_count: usize,
    pub face_count: usize,
    pub watertight: bool,
}

impl<T: Real> MeshStats<T> {
    pub fn extents(&self) -> Vec3<T> {
        self.aabb_max - self.aabb_min
    }

    pub fn diagonal(&self) -> T {
        self.extents().norm()
    }

    pub fn aabb_center(&self) -> Vec3<T> {
        (self.aabb_min + self.aabb_max) * T::half()
    }

    /// Bounding box of two meshes together.
    pub fn union_aabb(&self, other: &Self) -> (Vec3<T>, Vec3<T>) {
        (self.aabb_min.min(other.aabb_min), self.aabb_max.max(other.aabb_max))
    }
}

pub fn compute_stats<T: Real>(mesh: &TriMesh<T>) -> MeshStats<T> {
    let (aabb_min, aabb_max) = aabb(&mesh.vertices);
    let mut area_sum = T::zero();
    let mut weighted = Vec3::zero();
    let mut volume = T::zero();
    // Determinants are taken relative to the box center; identical to the
    // origin-based sum for closed meshes and far better conditioned.
    let origin = (aabb_min + aabb_max) * T::half();
    for f in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(f);
        let area = triangle_area(a, b, c);
        area_sum += area;
        weighted += (a + b + c) * (area / T::lit(3.0));
        volume += (a - origin).dot((b - origin).cross(c - origin));
    }
    let centroid = if area_sum > T::zero() {
        weighted * (T::one() / area_sum)
    } else if !mesh.vertices.is_empty() {
        mesh.vertices.iter().fold(Vec3::zero(), |acc, v| acc + *v) * (T::one() / T::count(mesh.vertices.len()))
    } else {
        Vec3::zero()
    };
    MeshStats {
        aabb_min,
        aabb_max,
        centroid,
        signed_volume: volume / T::lit(6.0),
        vertex_count: mesh.vertex_count(),
        face_count: mesh.face_count(),
        watertight: is_watertight(&mesh.faces),
    }
}

pub fn aabb<T: Real>(points: &[Vec3<T>]) -> (Vec3<T>, Vec3<T>) {
    match points.first() {
        None => (Vec3::zero(), Vec3::zero()),
        Some(&p0) => points.iter().fold((p0, p0), |(lo, hi), p| (lo.min(*p), hi.max(*p))),
    }
}

/// Every directed edge appears exactly once and its reverse exactly once.
pub fn is_watertight(faces: &[[usize; 3]]) -> bool {
    if faces.is_empty() {
        return false;
    }
    let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
}
