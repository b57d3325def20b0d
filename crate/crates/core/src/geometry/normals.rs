use super::mesh::TriMesh;
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Angle-weighted vertex normals plus the vertices no face touches.
#[derive(Debug, Clone)]
pub struct VertexNormals<T> {
    pub normals: Vec<Vec3<T>>,
    /// Vertices without incident faces; their normal is the zero vector.
    pub isolated: Vec<usize>,
}

fn corner_angle<T: Real>(at: Vec3<T>, p: Vec3<T>, q: Vec3<T>) -> T {
    let u = (p - at).normalized();
    let v = (q - at).normalized();
    // atan2 form stays accurate near 0 and pi.
    u.cross(v).norm().atan2(u.dot(v))
}

pub fn compute_vertex_normals<T: Real>(mesh: &TriMesh<T>) -> VertexNormals<T> {
    let mut acc = vec![Vec3::zero(); mesh.vertex_count()];
    let mut touched = vec![false; mesh.vertex_count()];
    for f in &mesh.faces {
        let [a, b, c] = [mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]];
        let n = (b - a).cross(c - a).normalized();
        let corners = [(f[0], a, b, c), (f[1], b, c, a), (f[2], c, a, b)];
        for (vi, at, p, q) in corners {
            acc[vi] += n * corner_angle(at, p, q);
            touched[vi] = true;
        }
    }
    let mut isolated = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            if !touched[i] || n.norm() == T::zero() {
                isolated.push(i);
                Vec3::zero()
            } else {
                n.normalized()
            }
        })
        .collect();
    VertexNormals { normals, isolated }
}

impl<T: Real> TriMesh<T> {
    /// Copy with freshly computed vertex normals.
    pub fn with_vertex_normals(&self) -> TriMesh<T> {
        let mut out = self.clone();
        let vn = compute_vertex_normals(self);
        if !vn.isolated.is_empty() {
            log::warn!("{}: {} isolated vertices have zero normals", self.name, vn.isolated.len());
        }
        out.vertex_normals = Some(vn.normals);
        out
    }
}
