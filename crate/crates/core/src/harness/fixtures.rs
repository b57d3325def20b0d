//! Synthetic benchmark cases with known ground-truth arrangements.

use std::path::{Path, PathBuf};

use super::{BenchmarkCase, HarnessError, Manifest, MANIFEST_SCHEMA_VERSION};
use crate::geometry::{box_mesh, cylinder, icosphere, remesh_subdivide, save_obj, TriMesh};
use crate::linalg::{Quat, Vec3};
use crate::optimizer::AlignMode;
use crate::pose::PoseParams;

/// Vertex count the fixtures are subdivided to for geometric losses.
pub const DENSE_VERTICES: usize = 300;
const CYLINDER_SEGMENTS: usize = 24;

/// One synthetic case held in memory.
#[derive(Debug, Clone)]
pub struct FixtureCase {
    pub id: String,
    /// Source in its own frame, centred on its bounding box.
    pub source: TriMesh<f64>,
    pub target: TriMesh<f64>,
    pub prompt: String,
    /// Places the source in its ground-truth arrangement.
    pub reference_pose: PoseParams<f64>,
    pub mode: AlignMode,
}

fn b(name: &str, lo: [f64; 3], hi: [f64; 3]) -> TriMesh<f64> {
    box_mesh(name, Vec3::from_f64(lo), Vec3::from_f64(hi))
}

/// Box of the given size centred at the origin.
fn centred_box(name: &str, size: [f64; 3]) -> TriMesh<f64> {
    b(name, size.map(|s| -0.5 * s), size.map(|s| 0.5 * s))
}

/// Closed cylinder centred at the origin.
fn centred_cylinder(name: &str, radius: f64, height: f64) -> TriMesh<f64> {
    cylinder(name, Vec3::new(0.0, -0.5 * height, 0.0), radius, height, CYLINDER_SEGMENTS)
}

/// Plate occupying `y in [top - thickness, top]`.
fn plate(name: &str, half: f64, thickness: f64, top: f64) -> TriMesh<f64> {
    b(name, [-half, top - thickness, -half], [half, top, half])
}

/// Square frame of four boxes around a square hole, `y in [y0, y1]`.
fn square_frame(name: &str, inner: f64, outer: f64, y0: f64, y1: f64) -> TriMesh<f64> {
    merge(
        name,
        &[
            b("w0", [-outer, y0, -outer], [outer, y1, -inner]),
            b("w1", [-outer, y0, inner], [outer, y1, outer]),
            b("w2", [-outer, y0, -inner], [-inner, y1, inner]),
            b("w3", [inner, y0, -inner], [outer, y1, inner]),
        ],
    )
}

/// Concatenates disjoint closed meshes into one single-part mesh.
pub fn merge(name: &str, meshes: &[TriMesh<f64>]) -> TriMesh<f64> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for m in meshes {
        let off = vertices.len();
        vertices.extend_from_slice(&m.vertices);
        faces.extend(m.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
    }
    TriMesh::from_parts_unchecked(name.to_string(), vertices, faces)
}

fn yaw(deg: f64) -> Quat<f64> {
    Quat::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), deg.to_radians())
}

fn case(id: &str, prompt: &str, source: TriMesh<f64>, target: TriMesh<f64>, pose: PoseParams<f64>, mode: AlignMode) -> FixtureCase {
    FixtureCase {
        id: id.to_string(),
        source,
        target,
        prompt: prompt.to_string(),
        reference_pose: pose,
        mode,
    }
}

/// The ten synthetic cases. Every target rests below `y = 0` or stands on a
/// base whose top is `y = 0`; sources touch their targets without overlap.
/// Meshes are subdivided to at least `min_vertices` (0 keeps them low-poly,
/// which renders much faster).
pub fn fixture_cases(min_vertices: usize) -> Vec<FixtureCase> {
    use AlignMode::{Rigid, Scaled};
    let t = |x: f64, y: f64, z: f64| PoseParams::translation(Vec3::new(x, y, z));
    let cases = vec![
        case("block_on_plate", "a block on a plate", centred_box("block", [0.6, 0.4, 0.4]), plate("plate", 1.0, 0.1, 0.0), t(0.0, 0.2, 0.0), Rigid),
        case(
            "cube_on_cube",
            "a small cube on a large cube",
            centred_box("small_cube", [0.5, 0.5, 0.5]),
            b("large_cube", [-0.5, -1.0, -0.5], [0.5, 0.0, 0.5]),
            PoseParams { tau: Vec3::new(0.0, 0.25, 0.0), quat: yaw(30.0), log_scale: 0.0 },
            Rigid,
        ),
        case("ball_on_plate", "a ball on a plate", icosphere("ball", Vec3::zero(), 0.3, 2), plate("plate", 1.0, 0.1, 0.0), t(0.2, 0.3, -0.1), Rigid),
        case("can_on_plate", "a can on a plate", centred_cylinder("can", 0.25, 0.6), plate("plate", 1.0, 0.1, 0.0), t(-0.2, 0.3, 0.2), Rigid),
        case(
            "peg_in_hole",
            "a peg in a hole",
            centred_box("peg", [0.38, 0.8, 0.38]),
            merge("holder", &[plate("base", 0.8, 0.1, 0.0), square_frame("frame", 0.2, 0.8, 0.0, 0.5)]),
            t(0.0, 0.4, 0.0),
            Rigid,
        ),
        case(
            "lid_on_box",
            "a lid on a box",
            centred_box("lid", [1.0, 0.1, 1.0]),
            b("box", [-0.5, -0.6, -0.5], [0.5, 0.0, 0.5]),
            t(0.0, 0.05, 0.0),
            Rigid,
        ),
        case(
            "plates_stacked",
            "a plate stacked on another plate",
            centred_cylinder("upper_plate", 0.9, 0.1),
            cylinder("lower_plate", Vec3::new(0.0, -0.1, 0.0), 1.0, 0.1, CYLINDER_SEGMENTS),
            t(0.0, 0.05, 0.0),
            Rigid,
        ),
        case(
            "block_beside_wall",
            "a block leaning against a wall",
            centred_box("block", [0.4, 0.6, 0.4]),
            merge("floor_and_wall", &[plate("floor", 1.0, 0.1, 0.0), b("wall", [0.4, 0.0, -1.0], [0.6, 1.0, 1.0])]),
            t(0.2, 0.3, 0.0),
            Rigid,
        ),
        case(
            "ring_on_post",
            "a ring around a post",
            square_frame("ring", 0.15, 0.4, -0.05, 0.05),
            merge("post_and_base", &[plate("base", 0.8, 0.1, 0.0), b("post", [-0.1, 0.0, -0.1], [0.1, 1.0, 0.1])]),
            t(0.0, 0.05, 0.0),
            Rigid,
        ),
        case(
            "tower_top",
            "a small cube on top of a tower",
            centred_box("cap", [0.8, 0.8, 0.8]),
            merge("tower", &[b("lower", [-0.4, -1.0, -0.4], [0.4, -0.5, 0.4]), b("upper", [-0.3, -0.5, -0.3], [0.3, 0.0, 0.3])]),
            PoseParams { tau: Vec3::new(0.0, 0.2, 0.0), quat: yaw(15.0), log_scale: 0.5f64.ln() },
            Scaled,
        ),
    ];
    cases
        .into_iter()
        .map(|c| FixtureCase { source: remesh_subdivide(&c.source, min_vertices), target: remesh_subdivide(&c.target, min_vertices), ..c })
        .collect()
}

/// Writes every fixture as OBJ files plus `manifest.json` into `dir` and
/// returns the manifest path.
pub fn write_fixture_set(dir: &Path, cases: &[FixtureCase]) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e))?;
    let mut entries = Vec::new();
    for c in cases {
        let src = format!("{}_source.obj", c.id);
        let tgt = format!("{}_target.obj", c.id);
        save_obj(&c.source, dir.join(&src))?;
        save_obj(&c.target, dir.join(&tgt))?;
        entries.push(BenchmarkCase {
            id: c.id.clone(),
            source_path: PathBuf::from(src),
            target_path: PathBuf::from(tgt),
            prompt: c.prompt.clone(),
            reference_pose: c.reference_pose,
            mode: c.mode,
        });
    }
    let manifest = Manifest { schema_version: MANIFEST_SCHEMA_VERSION, cases: entries };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
    Ok(path)
}

/// One object of a stacked assembly and where it belongs.
#[derive(Debug, Clone)]
pub struct AssemblyPart {
    /// Mesh in its own frame, centred on its bounding box.
    pub mesh: TriMesh<f64>,
    pub prompt: String,
    pub reference_pose: PoseParams<f64>,
}

/// Four stacked disks: plate, patty, topping and bun, bottom to top.
pub fn burger_parts(min_vertices: usize) -> Vec<AssemblyPart> {
    let layers = [("plate", 1.0, 0.1), ("patty", 0.7, 0.2), ("topping", 0.75, 0.08), ("bun", 0.72, 0.3)];
    let mut top = 0.0;
    layers
        .iter()
        .map(|&(name, radius, height)| {
            let mesh = remesh_subdivide(&centred_cylinder(name, radius, height), min_vertices);
            let pose = PoseParams::translation(Vec3::new(0.0, top + 0.5 * height, 0.0));
            top += height;
            AssemblyPart { mesh, prompt: format!("a {name} on a burger"), reference_pose: pose }
        })
        .collect()
}
