use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Faces with area at or below this threshold are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Which side of an alignment a group of vertices belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Source,
}

/// A named, contiguous object inside a (possibly composed) mesh.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshPart {
    pub name: String,
    pub role: Role,
    pub vertices: Range<usize>,
    pub faces: Range<usize>,
}

/// Indexed triangle mesh. Counter-clockwise winding faces outward.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T = f64> {
    pub name: String,
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[usize; 3]>,
    pub vertex_normals: Option<Vec<Vec3<T>>>,
    /// Object provenance; a freshly built mesh has a single part covering everything.
    pub parts: Vec<MeshPart>,
}

impl<T: Real> TriMesh<T> {
    /// Builds a mesh and checks the index and degeneracy invariants.
    pub fn new(
        name: impl Into<String>,
        vertices: Vec<Vec3<T>>,
        faces: Vec<[usize; 3]>,
    ) -> Result<Self, GeometryError> {
        let name = name.into();
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(GeometryError::IndexOutOfRange { face: fi, index: bad, vertex_count: n });
            }
            if triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]).as_f64() <= DEGENERATE_AREA
                || f[0] == f[1]
                || f[1] == f[2]
                || f[0] == f[2]
            {
                return Err(GeometryError::DegenerateFace(fi));
            }
        }
        if let Some(v) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(v));
        }
        Ok(Self::from_parts_unchecked(name, vertices, faces))
    }

    pub(crate) fn from_parts_unchecked(name: String, vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>) -> Self {
        let parts = vec![MeshPart {
            name: name.clone(),
            role: Role::Target,
            vertices: 0..vertices.len(),
            faces: 0..faces.len(),
        }];
        Self { name, vertices, faces, vertex_normals: None, parts }
    }

    pub fn empty(name: impl Into<String>) -> Self {
        Self::from_parts_unchecked(name.into(), Vec::new(), Vec::new())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn triangle(&self, f: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn surface_area(&self) -> T {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                triangle_area(a, b, c)
            })
            .sum()
    }

    /// Copy with every part relabelled as `role`.
    pub fn with_role(mut self, role: Role) -> Self {
        for p in &mut self.parts {
            p.role = role;
        }
        self
    }

    /// Vertex indices belonging to parts with the given role.
    pub fn role_mask(&self, role: Role) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for p in self.parts.iter().filter(|p| p.role == role) {
            mask[p.vertices.clone()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    /// Role of every face, derived from the part table.
    pub fn face_roles(&self) -> Vec<Role> {
        let mut roles = vec![Role::Target; self.faces.len()];
        for p in &self.parts {
            roles[p.faces.clone()].iter_mut().for_each(|r| *r = p.role);
        }
        roles
    }

    /// Extracts one part as a standalone mesh.
    pub fn part_mesh(&self, index: usize) -> TriMesh<T> {
        let p = &self.parts[index];
        let off = p.vertices.start;
        let vertices = self.vertices[p.vertices.clone()].to_vec();
        let faces = self.faces[p.faces.clone()]
            .iter()
            .map(|f| [f[0] - off, f[1] - off, f[2] - off])
            .collect();
        let mut m = TriMesh::from_parts_unchecked(p.name.clone(), vertices, faces);
        m.parts[0].role = p.role;
        m.vertex_normals = self.vertex_normals.as_ref().map(|n| n[p.vertices.clone()].to_vec());
        m
    }

    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        TriMesh {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(|v| v.cast()).collect(),
            faces: self.faces.clone(),
            vertex_normals: self.vertex_normals.as_ref().map(|n| n.iter().map(|v| v.cast()).collect()),
            parts: self.parts.clone(),
        }
    }

    /// Vertex normals, when present, must match the vertex count.
    pub fn check_normals(&self) -> Result<(), GeometryError> {
        if let Some(n) = &self.vertex_normals {
            if n.len() != self.vertices.len() {
                return Err(GeometryError::NormalCount { normals: n.len(), vertices: self.vertices.len() });
            }
        }
        Ok(())
    }
}

pub fn triangle_area<T: Real>(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> T {
    (b - a).cross(c - a).norm() * T::half()
}

/// Closed axis-aligned box as a 12-triangle outward-wound mesh.
pub fn box_mesh<T: Real>(name: &str, min: Vec3<T>, max: Vec3<T>) -> TriMesh<T> {
    let v = |x: bool, y: bool, z: bool| {
        Vec3::new(
            if x { max.x } else { min.x },
            if y { max.y } else { min.y },
            if z { max.z } else { min.z },
        )
    };
    let vertices = vec![
        v(false, false, false),
        v(true, false, false),
        v(true, true, false),
        v(false, true, false),
        v(false, false, true),
        v(true, false, true),
        v(true, true, true),
        v(false, true, true),
    ];
    let faces = vec![
        [0, 3, 2],
        [0, 2, 1], // z-
        [4, 5, 6],
        [4, 6, 7], // z+
        [0, 1, 5],
        [0, 5, 4], // y-
        [3, 7, 6],
        [3, 6, 2], // y+
        [0, 4, 7],
        [0, 7, 3], // x-
        [1, 2, 6],
        [1, 6, 5], // x+
    ];
    TriMesh::from_parts_unchecked(name.to_string(), vertices, faces)
}

/// Icosphere with `subdivisions` rounds of 4-way splitting, projected to radius.
pub fn icosphere<T: Real>(name: &str, center: Vec3<T>, radius: T, subdivisions: usize) -> TriMesh<T> {
    use std::collections::HashMap;
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let unit = |p: [f64; 3]| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    verts.iter_mut().for_each(|p| *p = unit(*p));
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let (p, q) = (verts[a], verts[b]);
                verts.push(unit([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = verts.into_iter().map(|p| center + Vec3::from_f64(p) * radius).collect();
    TriMesh::from_parts_unchecked(name.to_string(), vertices, faces)
}

/// Closed cylinder along +y with `segments` around the axis.
pub fn cylinder<T: Real>(name: &str, base_center: Vec3<T>, radius: T, height: T, segments: usize) -> TriMesh<T> {
    let mut vertices = Vec::with_capacity(2 * segments + 2);
    for ring in 0..2 {
        let y = if ring == 0 { T::zero() } else { height };
        for k in 0..segments {
            let a = T::lit(2.0 * std::f64::consts::PI * k as f64 / segments as f64);
            vertices.push(base_center + Vec3::new(radius * a.cos(), y, -radius * a.sin()));
        }
    }
    let bottom = vertices.len();
    vertices.push(base_center);
    let top = vertices.len();
    vertices.push(base_center + Vec3::new(T::zero(), height, T::zero()));
    let mut faces = Vec::new();
    for k in 0..segments {
        let k1 = (k + 1) % segments;
        let (b0, b1, t0, t1) = (k, k1, segments + k, segments + k1);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        faces.push([bottom, b1, b0]);
        faces.push([top, t0, t1]);
    }
    TriMesh::from_parts_unchecked(name.to_string(), vertices, faces)
}
