//! Settings file and the flag > environment > file > default merge.

use std::path::Path;

use clap::ValueEnum;
use ooalign::metrics::{EvalRig, DEFAULT_EVAL_VIEWS, DEFAULT_VOXEL_RESOLUTION};
use ooalign::optimizer::AlignConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;
/// Minimum vertex count meshes are subdivided to before alignment.
pub const DEFAULT_REMESH_VERTICES: usize = 5000;

pub const SEED_ENV: &str = "OOALIGN_SEED";
pub const GUIDANCE_ENV: &str = "OOALIGN_GUIDANCE";
pub const WORKERS_ENV: &str = "OOALIGN_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuidanceKind {
    Null,
    Silhouette,
    External,
}

/// Contents of a `--config` file. Every field is optional; unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub align: Option<AlignConfig>,
    pub seed: Option<u64>,
    pub guidance: Option<GuidanceKind>,
    pub scorer_addr: Option<String>,
    pub remesh_vertices: Option<usize>,
    pub canonicalize: Option<bool>,
    pub workers: Option<usize>,
    pub voxel_resolution: Option<usize>,
    pub eval_views: Option<usize>,
    pub eval_rig: Option<EvalRig>,
    pub llm_queries: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        if file.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::usage(format!(
                "config: schema_version must be {CONFIG_SCHEMA_VERSION} (got {})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self { schema_version: CONFIG_SCHEMA_VERSION, ..Self::default() }),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::usage(format!("config {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }
}

/// Values every command draws from. Flags and environment variables arrive
/// together through clap (a flag wins over its variable); the file and the
/// defaults fill whatever is left.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    /// Reported separately once flags are applied.
    #[serde(skip)]
    pub align: AlignConfig,
    pub seed: u64,
    pub guidance: GuidanceKind,
    pub scorer_addr: Option<String>,
    pub remesh_vertices: usize,
    pub canonicalize: bool,
    pub workers: usize,
    pub voxel_resolution: usize,
    pub eval_views: usize,
    pub eval_rig: EvalRig,
    pub llm_queries: usize,
}

/// Overrides gathered from flags and environment variables.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub guidance: Option<GuidanceKind>,
    pub scorer_addr: Option<String>,
    pub remesh_vertices: Option<usize>,
    pub canonicalize: Option<bool>,
    pub workers: Option<usize>,
    pub voxel_resolution: Option<usize>,
    pub eval_views: Option<usize>,
    pub llm_queries: Option<usize>,
}

impl Settings {
    pub fn resolve(file: ConfigFile, o: Overrides, default_guidance: GuidanceKind) -> Self {
        let scorer_addr = o.scorer_addr.or(file.scorer_addr).map(|a| a.trim().to_string()).filter(|a| !a.is_empty());
        Self {
            align: file.align.unwrap_or_default(),
            seed: o.seed.or(file.seed).unwrap_or(0),
            guidance: o.guidance.or(file.guidance).unwrap_or(default_guidance),
            scorer_addr,
            remesh_vertices: o.remesh_vertices.or(file.remesh_vertices).unwrap_or(DEFAULT_REMESH_VERTICES),
            canonicalize: o.canonicalize.or(file.canonicalize).unwrap_or(false),
            workers: o.workers.or(file.workers).unwrap_or(0),
            voxel_resolution: o.voxel_resolution.or(file.voxel_resolution).unwrap_or(DEFAULT_VOXEL_RESOLUTION),
            eval_views: o.eval_views.or(file.eval_views).unwrap_or(DEFAULT_EVAL_VIEWS),
            eval_rig: file.eval_rig.unwrap_or_default(),
            llm_queries: o.llm_queries.or(file.llm_queries).unwrap_or(1),
        }
    }
}
