//! Mesh representation, OBJ ingestion, preprocessing and geometric queries.

mod canonical;
pub mod distance;
mod mesh;
mod normals;
mod obj;
mod remesh;
pub mod spatial;
mod stats;

use thiserror::Error;

pub use canonical::{upright_canonicalize, CanonicalReport, Canonicalized};
pub use mesh::{box_mesh, cylinder, icosphere, triangle_area, MeshPart, Role, TriMesh, DEGENERATE_AREA};
pub use normals::{compute_vertex_normals, VertexNormals};
pub use obj::{load_obj, parse_obj, save_obj, write_obj_string, ObjLoad};
pub use remesh::remesh_subdivide;
pub use stats::{aabb, compute_stats, is_watertight, MeshStats};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: face index {index} out of range ({vertex_count} vertices)")]
    ObjIndexOutOfRange { line: usize, index: usize, vertex_count: usize },
    #[error("face {face}: index {index} out of range ({vertex_count} vertices)")]
    IndexOutOfRange { face: usize, index: usize, vertex_count: usize },
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error("vertex {0} is not finite")]
    NonFinite(usize),
    #[error("mesh has no vertices or faces")]
    EmptyMesh,
    #[error("{normals} normals for {vertices} vertices")]
    NormalCount { normals: usize, vertices: usize },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// Remesh to a minimum vertex count and attach vertex normals.
pub fn preprocess<T: crate::Real>(mesh: &TriMesh<T>, target_vertex_count: usize) -> TriMesh<T> {
    remesh_subdivide(mesh, target_vertex_count).with_vertex_normals()
}
