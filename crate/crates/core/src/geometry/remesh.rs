//! Longest-edge midpoint subdivision.
//!
//! Each split inserts the midpoint of the globally longest edge and splits
//! every face sharing that edge, so the mesh stays conforming and the
//! surface is unchanged.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::mesh::TriMesh;
use crate::scalar::Real;

#[derive(Debug, PartialEq)]
struct EdgeEntry {
    len_sq: f64,
    a: usize,
    b: usize,
}

impl Eq for EdgeEntry {}

impl Ord for EdgeEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Longest first, then lowest indices.
        self.len_sq
            .total_cmp(&other.len_sq)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
    }
}

impl PartialOrd for EdgeEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

pub fn remesh_subdivide<T: Real>(mesh: &TriMesh<T>, target_vertex_count: usize) -> TriMesh<T> {
    if mesh.vertex_count() >= target_vertex_count || mesh.faces.is_empty() {
        return mesh.clone();
    }
    let mut vertices = mesh.vertices.clone();
    let mut faces = mesh.faces.clone();
    // Per-face part index, so provenance survives subdivision.
    let mut face_part: Vec<usize> = vec![0; faces.len()];
    let mut vertex_part: Vec<usize> = vec![0; vertices.len()];
    for (pi, p) in mesh.parts.iter().enumerate() {
        face_part[p.faces.clone()].iter_mut().for_each(|x| *x = pi);
        vertex_part[p.vertices.clone()].iter_mut().for_each(|x| *x = pi);
    }

    let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let len_sq = |v: &[crate::linalg::Vec3<T>], a: usize, b: usize| (v[a] - v[b]).norm_squared().as_f64();
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = key(f[k], f[(k + 1) % 3]);
            let list = edge_faces.entry((a, b)).or_default();
            if list.is_empty() {
                heap.push(EdgeEntry { len_sq: len_sq(&vertices, a, b), a, b });
            }
            list.push(fi);
        }
    }

    while vertices.len() < target_vertex_count {
        let Some(EdgeEntry { a, b, .. }) = heap.pop() else { break };
        let Some(adjacent) = edge_faces.remove(&(a, b)) else { continue };
        let m = vertices.len();
        vertices.push((vertices[a] + vertices[b]) * T::half());
        vertex_part.push(vertex_part[a]);

        let mut touched = Vec::new();
        for fi in adjacent {
            let f = faces[fi];
            // Rotate so the split edge is (f[0], f[1]) in face order.
            let r = (0..3)
                .find(|&k| key(f[k], f[(k + 1) % 3]) == (a, b))
                .expect("edge map out of sync with faces");
            let (x, y, z) = (f[r], f[(r + 1) % 3], f[(r + 2) % 3]);
            let new_fi = faces.len();
            faces[fi] = [x, m, z];
            faces.push([m, y, z]);
            face_part.push(face_part[fi]);

            if let Some(list) = edge_faces.get_mut(&key(y, z)) {
                for e in list.iter_mut().filter(|e| **e == fi) {
                    *e = new_fi;
                }
            }
            edge_faces.entry(key(x, m)).or_default().push(fi);
            edge_faces.entry(key(m, y)).or_default().push(new_fi);
            let mz = edge_faces.entry(key(m, z)).or_default();
            mz.push(fi);
            mz.push(new_fi);
            touched.extend([key(x, m), key(m, y), key(m, z)]);
        }
        touched.sort_unstable();
        touched.dedup();
        for (p, q) in touched {
            heap.push(EdgeEntry { len_sq: len_sq(&vertices, p, q), a: p, b: q });
        }
    }

    reorder_by_part(mesh, vertices, faces, vertex_part, face_part)
}

/// New vertices and faces were appended at the end; restore contiguous part ranges.
fn reorder_by_part<T: Real>(
    original: &TriMesh<T>,
    vertices: Vec<crate::linalg::Vec3<T>>,
    faces: Vec<[usize; 3]>,
    vertex_part: Vec<usize>,
    face_part: Vec<usize>,
) -> TriMesh<T> {
    let parts_n = original.parts.len().max(1);
    let mut remap = vec![0usize; vertices.len()];
    let mut new_vertices = Vec::with_capacity(vertices.len());
    let mut new_faces = Vec::with_capacity(faces.len());
    let mut parts = original.parts.clone();
    for pi in 0..parts_n {
        let v0 = new_vertices.len();
        for (vi, v) in vertices.iter().enumerate() {
            if vertex_part[vi] == pi {
                remap[vi] = new_vertices.len();
                new_vertices.push(*v);
            }
        }
        let f0 = new_faces.len();
        for (fi, f) in faces.iter().enumerate() {
            if face_part[fi] == pi {
                new_faces.push(*f);
            }
        }
        if let Some(p) = parts.get_mut(pi) {
            p.vertices = v0..new_vertices.len();
            p.faces = f0..new_faces.len();
        }
    }
    for f in &mut new_faces {
        for i in f.iter_mut() {
            *i = remap[*i];
        }
    }
    TriMesh {
        name: original.name.clone(),
        vertices: new_vertices,
        faces: new_faces,
        vertex_normals: None,
        parts,
    }
}
