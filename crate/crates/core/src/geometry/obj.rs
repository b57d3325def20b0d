//! Wavefront OBJ reading and writing.
//!
//! Only `v`, `vn`, `f` and `o` records are interpreted; everything else
//! (materials, texture coordinates, groups, smoothing) is skipped.

use std::fmt::Write as _;
use std::path::Path;

use super::mesh::{triangle_area, MeshPart, Role, TriMesh, DEGENERATE_AREA};
use super::GeometryError;
use crate::linalg::Vec3;
use crate::scalar::Real;

/// Result of parsing an OBJ document.
#[derive(Debug, Clone)]
pub struct ObjLoad<T> {
    pub mesh: TriMesh<T>,
    /// Faces removed because they had repeated indices or near-zero area.
    pub dropped_degenerate: usize,
}

const ROLE_TAG: &str = "# ooalign-role ";

pub fn load_obj<T: Real>(path: impl AsRef<Path>) -> Result<TriMesh<T>, GeometryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io(path.display().to_string(), e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let load = parse_obj::<T>(&text, &name)?;
    if load.dropped_degenerate > 0 {
        log::warn!("{}: dropped {} degenerate faces", path.display(), load.dropped_degenerate);
    }
    Ok(load.mesh)
}

fn parse_index(tok: &str, count: usize, line: usize) -> Result<usize, GeometryError> {
    let raw = tok.split('/').next().unwrap_or("");
    let idx: i64 = raw
        .parse()
        .map_err(|_| GeometryError::Parse { line, message: format!("bad face index `{tok}`") })?;
    if idx <= 0 {
        return Err(GeometryError::Parse { line, message: format!("non-positive face index {idx}") });
    }
    let idx = (idx - 1) as usize;
    if idx >= count {
        return Err(GeometryError::ObjIndexOutOfRange { line, index: idx + 1, vertex_count: count });
    }
    Ok(idx)
}

fn normal_index(tok: &str) -> Option<usize> {
    let mut it = tok.split('/');
    it.next();
    it.next();
    it.next().and_then(|s| s.parse::<usize>().ok()).map(|i| i.wrapping_sub(1))
}

pub fn parse_obj<T: Real>(text: &str, name: &str) -> Result<ObjLoad<T>, GeometryError> {
    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut normals: Vec<Vec3<T>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    // Normals are kept only when every corner uses `vn` index == `v` index.
    let mut normals_aligned = true;
    let mut dropped = 0usize;
    // (name, role, first face)
    let mut objects: Vec<(String, Role, usize)> = Vec::new();
    let mut pending_role = Role::Target;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if let Some(role) = trimmed.strip_prefix(ROLE_TAG) {
            pending_role = if role.trim() == "source" { Role::Source } else { Role::Target };
            continue;
        }
        let content = trimmed.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut toks = content.split_whitespace();
        let tag = toks.next().unwrap_or("");
        match tag {
            "v" | "vn" => {
                let vals: Vec<f64> = toks
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| GeometryError::Parse { line, message: format!("bad `{tag}` record") })?;
                if vals.len() != 3 {
                    return Err(GeometryError::Parse { line, message: format!("`{tag}` needs 3 coordinates") });
                }
                let p = Vec3::from_f64([vals[0], vals[1], vals[2]]);
                if !p.is_finite() {
                    return Err(GeometryError::Parse { line, message: "non-finite coordinate".into() });
                }
                if tag == "v" {
                    vertices.push(p);
                } else {
                    normals.push(p);
                }
            }
            "f" => {
                let corners: Vec<&str> = toks.collect();
                if corners.len() < 3 {
                    return Err(GeometryError::Parse { line, message: "face needs at least 3 vertices".into() });
                }
                let idx = corners
                    .iter()
                    .map(|c| parse_index(c, vertices.len(), line))
                    .collect::<Result<Vec<_>, _>>()?;
                for (c, &vi) in corners.iter().zip(&idx) {
                    if normal_index(c) != Some(vi) {
                        normals_aligned = false;
                    }
                }
                for k in 1..idx.len() - 1 {
                    let f = [idx[0], idx[k], idx[k + 1]];
                    let degenerate = f[0] == f[1]
                        || f[1] == f[2]
                        || f[0] == f[2]
                        || triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]).as_f64() <= DEGENERATE_AREA;
                    if degenerate {
                        dropped += 1;
                    } else {
                        faces.push(f);
                    }
                }
            }
            "o" => {
                let oname = toks.collect::<Vec<_>>().join(" ");
                objects.push((oname, pending_role, faces.len()));
                pending_role = Role::Target;
            }
            _ => {}
        }
    }

    if vertices.is_empty() || faces.is_empty() {
        return Err(GeometryError::EmptyMesh);
    }
    let mut mesh = TriMesh::from_parts_unchecked(name.to_string(), vertices, faces);
    if normals_aligned && normals.len() == mesh.vertices.len() {
        mesh.vertex_normals = Some(normals.into_iter().map(|n| n.normalized()).collect());
    }
    if let Some(parts) = object_parts(&mesh, &objects) {
        mesh.parts = parts;
    }
    Ok(ObjLoad { mesh, dropped_degenerate: dropped })
}

/// Reconstructs parts from `o` records when they cover contiguous,
/// disjoint vertex and face ranges.
fn object_parts<T: Real>(mesh: &TriMesh<T>, objects: &[(String, Role, usize)]) -> Option<Vec<MeshPart>> {
    if objects.is_empty() || objects[0].2 != 0 {
        return None;
    }
    let mut parts = Vec::with_capacity(objects.len());
    let mut next_vertex = 0;
    for (k, (name, role, start)) in objects.iter().enumerate() {
        let end = objects.get(k + 1).map(|o| o.2).unwrap_or(mesh.faces.len());
        if end <= *start {
            return None;
        }
        let faces = *start..end;
        let lo = mesh.faces[faces.clone()].iter().flatten().min().copied()?;
        let hi = mesh.faces[faces.clone()].iter().flatten().max().copied()?;
        if lo != next_vertex {
            return None;
        }
        next_vertex = hi + 1;
        parts.push(MeshPart { name: name.clone(), role: *role, vertices: lo..hi + 1, faces });
    }
    (next_vertex == mesh.vertices.len()).then_some(parts)
}

/// Coordinates are written in shortest round-trip decimal form.
pub fn write_obj_string<T: Real>(mesh: &TriMesh<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", mesh.name);
    let _ = writeln!(out, "# vertices {} faces {}", mesh.vertex_count(), mesh.face_count());
    for v in &mesh.vertices {
        let [x, y, z] = v.to_f64();
        let _ = writeln!(out, "v {x:?} {y:?} {z:?}");
    }
    if let Some(ns) = &mesh.vertex_normals {
        for n in ns {
            let [x, y, z] = n.to_f64();
            let _ = writeln!(out, "vn {x:?} {y:?} {z:?}");
        }
    }
    let with_normals = mesh.vertex_normals.is_some();
    let multi = mesh.parts.len() > 1;
    for (pi, part) in mesh.parts.iter().enumerate() {
        if multi || pi == 0 {
            let role = match part.role {
                Role::Target => "target",
                Role::Source => "source",
            };
            let _ = writeln!(out, "{ROLE_TAG}{role}");
            let _ = writeln!(out, "o {}", part.name);
        }
        for f in &mesh.faces[part.faces.clone()] {
            let [a, b, c] = [f[0] + 1, f[1] + 1, f[2] + 1];
            if with_normals {
                let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
            } else {
                let _ = writeln!(out, "f {a} {b} {c}");
            }
        }
    }
    out
}

pub fn save_obj<T: Real>(mesh: &TriMesh<T>, path: impl AsRef<Path>) -> Result<(), GeometryError> {
    let path = path.as_ref();
    std::fs::write(path, write_obj_string(mesh)).map_err(|e| GeometryError::Io(path.display().to_string(), e))
}
