//! File and stdout helpers shared by the commands.

use std::path::Path;

use ooalign::geometry::{load_obj, save_obj, TriMesh};
use ooalign::pose::PoseParams;
use serde::Serialize;

use crate::error::CliError;

/// Version stamped into every JSON document the CLI prints or writes.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn to_json<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    write_text(path, &to_json(value))
}

pub fn print_json<S: Serialize>(value: &S) {
    print!("{}", to_json(value));
}

pub fn save_mesh(mesh: &TriMesh<f64>, path: &Path) -> Result<(), CliError> {
    save_obj(mesh, path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn load_mesh(path: &Path) -> Result<TriMesh<f64>, CliError> {
    load_obj::<f64>(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Pose given inline as JSON (`{"tau":..,"quat":..,"scale":..}`) or as a file holding it.
pub fn parse_pose(arg: &str) -> Result<PoseParams<f64>, CliError> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|e| CliError::usage(format!("pose file {arg}: {e}")))?
    };
    let pose: PoseParams<f64> = serde_json::from_str(&text).map_err(|e| CliError::usage(format!("pose {arg}: {e}")))?;
    if !pose.is_finite() {
        return Err(CliError::usage(format!("pose {arg} has non-finite components")));
    }
    Ok(pose)
}
