//! `ooalign bench`, `perturb`, `compose` and `fixtures`.

use std::path::{Path, PathBuf};

use ooalign::geometry::{Role, TriMesh};
use ooalign::guidance::{GuidanceProvider, NullProvider, SilhouetteProvider};
use ooalign::harness::fixtures::{fixture_cases, write_fixture_set};
use ooalign::harness::{
    case_initial_pose, compose_iterative, load_manifest, run_benchmark, BenchmarkOptions, GuidanceChoice, HarnessError, ProviderFactory, RecordStatus, Stage, StageRecord, SummaryRow,
};
use ooalign::pose::{apply_pose, compose_scene, PoseParams};
use serde::{Deserialize, Serialize};

use crate::align::{apply_run_options, external_provider, remesh};
use crate::config::{ConfigFile, GuidanceKind, Overrides, Settings};
use crate::error::CliError;
use crate::output::{create_dir, load_mesh, print_json, save_mesh, to_json, write_json, OUTPUT_SCHEMA_VERSION};
use crate::{BenchArgs, Cli, ComposeArgs, FixturesArgs, PerturbArgs};

pub const STAGES_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct BenchOutput<'a> {
    schema_version: u32,
    command: &'static str,
    run_dir: PathBuf,
    records: usize,
    failed_records: usize,
    summary: &'a [SummaryRow],
}

pub fn bench(cli: &Cli, a: &BenchArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let mut o = a.run.overrides();
    o.workers = a.workers;
    o.voxel_resolution = a.metrics.voxel_resolution;
    o.eval_views = a.metrics.eval_views;
    let settings = Settings::resolve(file, o, GuidanceKind::Silhouette);
    let mut options = BenchmarkOptions::new(&a.out);
    options.config = settings.align.clone();
    apply_run_options(&mut options.config, &a.run);
    options.config.validate()?;
    options.methods = a.methods.clone();
    options.guidance = match settings.guidance {
        GuidanceKind::Null => GuidanceChoice::Null,
        GuidanceKind::Silhouette => GuidanceChoice::Silhouette,
        GuidanceKind::External => GuidanceChoice::External { addr: external_provider(&settings)?.addr().to_string() },
    };
    options.master_seed = settings.seed;
    options.workers = settings.workers;
    options.voxel_resolution = settings.voxel_resolution;
    options.eval_views = settings.eval_views;
    options.eval_rig = settings.eval_rig.clone();
    // Validate the manifest before creating the output directory.
    load_manifest(&a.manifest)?;

    let report = run_benchmark(&a.manifest, &options)?;
    let failed = report.records.iter().filter(|r| r.status == RecordStatus::Failed).count();
    if cli.json {
        print_json(&BenchOutput {
            schema_version: OUTPUT_SCHEMA_VERSION,
            command: "bench",
            run_dir: report.run_dir.clone(),
            records: report.records.len(),
            failed_records: failed,
            summary: &report.summary,
        });
    } else {
        print!("{}", report.summary_csv);
        eprintln!("{} records ({failed} failed) in {}", report.records.len(), report.run_dir.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct PerturbOutput<'a> {
    schema_version: u32,
    command: &'static str,
    case_id: &'a str,
    seed: u64,
    initial_pose: PoseParams<f64>,
}

pub fn perturb(cli: &Cli, a: &PerturbArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let settings = Settings::resolve(file, Overrides { seed: a.seed, ..Overrides::default() }, GuidanceKind::Null);
    let cases = load_manifest(&a.manifest)?;
    let case = cases
        .iter()
        .find(|c| c.id == a.case_id)
        .ok_or_else(|| CliError::usage(format!("no case `{}` in {}", a.case_id, a.manifest.display())))?;
    let pose = case_initial_pose(case, settings.seed)?;
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join(format!("{}_start_pose.json", case.id)), &pose)?;
        let source = load_mesh(&case.source_path)?;
        let placed = apply_pose(&source, &pose).map_err(CliError::usage)?;
        save_mesh(&placed, &out.join(format!("{}_start_source.obj", case.id)))?;
    }
    if cli.json {
        print_json(&PerturbOutput { schema_version: OUTPUT_SCHEMA_VERSION, command: "perturb", case_id: &case.id, seed: settings.seed, initial_pose: pose });
    } else {
        println!("{}", serde_json::to_string(&pose).expect("pose serializes"));
    }
    Ok(())
}

/// One entry of a `--stages` file. Mesh paths are relative to the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub mesh: PathBuf,
    pub prompt: String,
    #[serde(default)]
    pub initial_pose: PoseParams<f64>,
    /// Where this mesh belongs; required for silhouette guidance.
    #[serde(default)]
    pub reference_pose: Option<PoseParams<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagesFile {
    pub schema_version: u32,
    pub stages: Vec<StageSpec>,
}

#[derive(Serialize)]
struct ComposeOutput<'a> {
    schema_version: u32,
    command: &'static str,
    status: &'static str,
    failed_stage: Option<usize>,
    error: Option<String>,
    scene: PathBuf,
    stages: &'a [StageRecord],
}

#[derive(Serialize)]
struct StageSummary<'a> {
    index: usize,
    name: &'a str,
    pose: PoseParams<f64>,
}

fn load_stages(path: &Path) -> Result<StagesFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let file: StagesFile = serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if file.schema_version != STAGES_SCHEMA_VERSION {
        return Err(CliError::usage(format!("{}: schema_version must be {STAGES_SCHEMA_VERSION}", path.display())));
    }
    Ok(file)
}

/// Reference scene for stage `k`: stages before `k` as targets and stage
/// `k` as the source, all at their reference poses.
fn reference_scene(meshes: &[TriMesh<f64>], poses: &[PoseParams<f64>], k: usize) -> Result<TriMesh<f64>, HarnessError> {
    let mut scene = TriMesh::empty("reference");
    for j in 0..k {
        let placed = apply_pose(&meshes[j], &poses[j])?.with_role(Role::Target);
        scene = compose_scene(&scene, &placed).with_role(Role::Target);
    }
    Ok(compose_scene(&scene, &apply_pose(&meshes[k], &poses[k])?))
}

pub fn compose(cli: &Cli, a: &ComposeArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let mut o = a.run.overrides();
    o.remesh_vertices = a.remesh;
    let settings = Settings::resolve(file, o, GuidanceKind::External);
    let mut config = settings.align.clone();
    apply_run_options(&mut config, &a.run);
    config.master_seed = settings.seed;
    config.validate()?;

    let spec = load_stages(&a.stages)?;
    let base = a.stages.parent().unwrap_or(Path::new("."));
    let meshes = spec
        .stages
        .iter()
        .map(|s| load_mesh(&base.join(&s.mesh)).map(|m| remesh(m, settings.remesh_vertices)))
        .collect::<Result<Vec<_>, _>>()?;
    let stages: Vec<Stage> = spec
        .stages
        .iter()
        .zip(&meshes)
        .map(|(s, m)| Stage { mesh: m.clone(), prompt: s.prompt.clone(), initial_pose: s.initial_pose })
        .collect();
    let reference_poses: Option<Vec<PoseParams<f64>>> = spec.stages.iter().map(|s| s.reference_pose).collect();
    let shading = config.shading.clone();
    let mut factory: Box<ProviderFactory<'_>> = match settings.guidance {
        GuidanceKind::Null => Box::new(|_, _| Ok(Box::new(NullProvider) as Box<dyn GuidanceProvider<f64>>)),
        GuidanceKind::Silhouette => {
            let poses = reference_poses.ok_or_else(|| CliError::usage("silhouette guidance needs a reference_pose on every stage"))?;
            let meshes = meshes.clone();
            Box::new(move |k, _| {
                let scene = reference_scene(&meshes, &poses, k)?;
                Ok(Box::new(SilhouetteProvider::from_scene(scene, shading.clone())) as Box<dyn GuidanceProvider<f64>>)
            })
        }
        GuidanceKind::External => {
            let addr = external_provider(&settings)?.addr().to_string();
            Box::new(move |_, _| Ok(Box::new(ooalign::guidance::ExternalProvider::new(addr.clone())) as Box<dyn GuidanceProvider<f64>>))
        }
    };

    let (result, failure) = match compose_iterative(&stages, &config, factory.as_mut()) {
        Ok(r) => (r, None),
        Err(f) => {
            let f = *f;
            (f.partial, Some((f.stage, f.error)))
        }
    };
    create_dir(&a.out)?;
    let scene_path = a.out.join("scene.obj");
    if !result.scene.is_empty() {
        save_mesh(&result.scene, &scene_path)?;
    }
    let output = ComposeOutput {
        schema_version: OUTPUT_SCHEMA_VERSION,
        command: "compose",
        status: if failure.is_some() { "failed" } else { "ok" },
        failed_stage: failure.as_ref().map(|(k, _)| *k),
        error: failure.as_ref().map(|(_, e)| e.to_string()),
        scene: scene_path,
        stages: &result.stages,
    };
    write_json(&a.out.join("stages.json"), &output)?;
    if let Some((k, e)) = failure {
        log::error!("stage {k} failed; partial results are in {}", a.out.display());
        return Err(e.into());
    }
    if cli.json {
        let summary: Vec<StageSummary> = result.stages.iter().map(|s| StageSummary { index: s.index, name: &s.name, pose: s.pose }).collect();
        print_json(&serde_json::json!({
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "command": "compose",
            "scene": output.scene,
            "stages": summary,
        }));
    } else {
        for s in &result.stages {
            println!("stage {} {}: {}", s.index, s.name, to_json(&s.pose).split_whitespace().collect::<Vec<_>>().join(" "));
        }
        println!("wrote {}", output.scene.display());
    }
    Ok(())
}

pub fn fixtures(cli: &Cli, a: &FixturesArgs) -> Result<(), CliError> {
    let cases = fixture_cases(a.min_vertices);
    let manifest = write_fixture_set(&a.out, &cases)?;
    if cli.json {
        print_json(&serde_json::json!({
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "command": "fixtures",
            "manifest": manifest,
            "cases": cases.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
        }));
    } else {
        println!("{}", manifest.display());
    }
    Ok(())
}
