//! Point-triangle and ray-triangle primitives.

use crate::linalg::Vec3;
use crate::scalar::Real;

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
pub fn closest_point_on_triangle<T: Real>(p: Vec3<T>, a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Vec3<T> {
    let zero = T::zero();
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= zero && d2 <= zero {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= zero && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= zero && d1 >= zero && d3 <= zero {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= zero && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= zero && d2 >= zero && d6 <= zero {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= zero && (d4 - d3) >= zero && (d5 - d6) >= zero {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = T::one() / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

pub fn point_triangle_distance_sq<T: Real>(p: Vec3<T>, tri: [Vec3<T>; 3]) -> T {
    (closest_point_on_triangle(p, tri[0], tri[1], tri[2]) - p).norm_squared()
}

/// Möller-Trumbore; returns the ray parameter of a hit with `t >= 0`.
pub fn ray_triangle<T: Real>(origin: Vec3<T>, dir: Vec3<T>, tri: [Vec3<T>; 3]) -> Option<T> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let h = dir.cross(e2);
    let det = e1.dot(h);
    if det.abs() <= T::epsilon() * e1.norm() * e2.norm() * dir.norm() {
        return None;
    }
    let inv = T::one() / det;
    let s = origin - tri[0];
    let u = s.dot(h) * inv;
    if u < T::zero() || u > T::one() {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv;
    if v < T::zero() || u + v > T::one() {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t >= T::zero()).then_some(t)
}

/// Sparse hashed grid of triangles for "is any surface within `pad`" queries.
pub struct TriangleIndex<'a, T> {
    mesh: &'a super::TriMesh<T>,
    inv_cell: T,
    cells: std::collections::HashMap<[i64; 3], Vec<usize>>,
}

impl<'a, T: Real> TriangleIndex<'a, T> {
    pub fn new(mesh: &'a super::TriMesh<T>, pad: T) -> Self {
        let (lo, hi) = super::stats::aabb(&mesh.vertices);
        let diag = (hi - lo).norm();
        let cell = pad.max(diag / T::lit(48.0)).max(T::lit(1e-12));
        let inv_cell = T::one() / cell;
        let mut cells: std::collections::HashMap<[i64; 3], Vec<usize>> = std::collections::HashMap::new();
        let key = |v: T| (v * inv_cell).floor().to_i64().unwrap_or(0);
        for f in 0..mesh.faces.len() {
            let [a, b, c] = mesh.triangle(f);
            let tlo = a.min(b).min(c) - Vec3::splat(pad);
            let thi = a.max(b).max(c) + Vec3::splat(pad);
            for z in key(tlo.z)..=key(thi.z) {
                for y in key(tlo.y)..=key(thi.y) {
                    for x in key(tlo.x)..=key(thi.x) {
                        cells.entry([x, y, z]).or_default().push(f);
                    }
                }
            }
        }
        Self { mesh, inv_cell, cells }
    }

    /// Triangles whose padded bounds contain `p`.
    pub fn candidates(&self, p: Vec3<T>) -> &[usize] {
        let k = [p.x, p.y, p.z].map(|v| (v * self.inv_cell).floor().to_i64().unwrap_or(0));
        self.cells.get(&k).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Squared distance to the closest candidate triangle, if any is near.
    pub fn nearby_distance_sq(&self, p: Vec3<T>) -> Option<T> {
        self.candidates(p)
            .iter()
            .map(|&f| point_triangle_distance_sq(p, self.mesh.triangle(f)))
            .fold(None, |acc: Option<T>, d| Some(acc.map_or(d, |a| a.min(d))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closest_point_regions() {
        let (a, b, c) = (Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0));
        assert!((closest_point_on_triangle(Vec3::new(0.2, 0.2, 3.0), a, b, c) - Vec3::new(0.2, 0.2, 0.0)).norm() < 1e-12);
        assert_eq!(closest_point_on_triangle(Vec3::new(-1.0, -1.0, 0.0), a, b, c), a);
        assert_eq!(closest_point_on_triangle(Vec3::new(0.5, -2.0, 1.0), a, b, c), Vec3::new(0.5, 0.0, 0.0));
        let p = closest_point_on_triangle(Vec3::new(1.0, 1.0, 0.0), a, b, c);
        assert!((p - Vec3::new(0.5, 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ray_hits_and_misses() {
        let tri = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        let t: f64 = ray_triangle(Vec3::new(0.2, 0.2, 2.0), Vec3::new(0.0, 0.0, -1.0), tri).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(ray_triangle(Vec3::new(0.2, 0.2, 2.0), Vec3::new(0.0, 0.0, 1.0), tri).is_none());
        assert!(ray_triangle(Vec3::new(2.0, 2.0, 2.0), Vec3::new(0.0, 0.0, -1.0), tri).is_none());
    }
}
