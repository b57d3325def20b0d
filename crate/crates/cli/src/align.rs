//! `ooalign align`.

use std::path::Path;

use ooalign::geometry::{preprocess, upright_canonicalize, CanonicalReport, TriMesh};
use ooalign::guidance::{ExternalProvider, GuidanceProvider, GuidanceTarget, NullProvider, SilhouetteProvider, SCORER_ADDR_ENV};
use ooalign::hparams::{suggest, HparamDecision, LlmClient, LLM_URL_ENV};
use ooalign::linalg::{Quat, Vec3};
use ooalign::metrics::eval_cameras;
use ooalign::optimizer::{run_alignment, AlignConfig, RunResult};
use ooalign::pose::{apply_pose, compose_scene, PoseParams};
use ooalign::render::{Image, RenderedView, Shading};
use serde::Serialize;

use crate::config::{ConfigFile, GuidanceKind, Settings};
use crate::error::CliError;
use crate::output::{create_dir, load_mesh, parse_pose, print_json, save_mesh, to_json, write_json, write_text, OUTPUT_SCHEMA_VERSION};
use crate::{AlignArgs, Cli, RunOptions};

/// Builds the provider for `kind`. External providers are probed before use
/// so an unreachable scorer fails fast.
pub fn build_provider(kind: GuidanceKind, settings: &Settings, reference_scene: Option<TriMesh<f64>>, shading: &Shading) -> Result<Box<dyn GuidanceProvider<f64>>, CliError> {
    match kind {
        GuidanceKind::Null => Ok(Box::new(NullProvider)),
        GuidanceKind::Silhouette => {
            let scene = reference_scene.ok_or_else(|| CliError::usage("silhouette guidance needs a reference arrangement"))?;
            Ok(Box::new(SilhouetteProvider::from_scene(scene, shading.clone())))
        }
        GuidanceKind::External => {
            let provider = external_provider(settings)?;
            Ok(Box::new(provider))
        }
    }
}

pub fn external_provider(settings: &Settings) -> Result<ExternalProvider, CliError> {
    let addr = settings.scorer_addr.as_ref().ok_or_else(|| {
        CliError::GuidanceUnavailable(format!("external guidance needs a scorer: set {SCORER_ADDR_ENV} or pass --scorer-addr (host:port)"))
    })?;
    let provider = ExternalProvider::new(addr.clone());
    provider.check_connection().map_err(|e| CliError::GuidanceUnavailable(e.to_string()))?;
    Ok(provider)
}

/// Applies `--steps` and `--restarts`.
pub fn apply_run_options(config: &mut AlignConfig, run: &RunOptions) {
    if let Some(steps) = run.steps {
        config.schedule.total_steps = steps;
    }
    if let Some(restarts) = run.restarts {
        config.restarts = restarts;
    }
}

pub fn remesh(mesh: TriMesh<f64>, min_vertices: usize) -> TriMesh<f64> {
    if min_vertices == 0 {
        mesh
    } else {
        preprocess(&mesh, min_vertices)
    }
}

/// Pose equivalent to the canonicalization map `v -> R (v - c)`.
fn canonical_pose(source: &TriMesh<f64>) -> (TriMesh<f64>, PoseParams<f64>, CanonicalReport) {
    let c = upright_canonicalize(source);
    let tau = Vec3::zero() - c.rotation.mul_vec(c.centroid);
    (c.mesh, PoseParams { tau, quat: Quat::from_rotation_matrix(&c.rotation), log_scale: 0.0 }, c.report)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().replace(['_', '-'], " ")).unwrap_or_else(|| "object".into())
}

#[derive(Serialize)]
struct AlignRecord<'a> {
    schema_version: u32,
    command: &'static str,
    source: &'a Path,
    target: &'a Path,
    prompt: Option<&'a str>,
    reference_image: Option<&'a Path>,
    guidance: GuidanceKind,
    settings: &'a Settings,
    config: &'a AlignConfig,
    hparams: Option<&'a HparamDecision>,
    canonicalization: Option<&'a CanonicalReport>,
    initial_pose: PoseParams<f64>,
    pose: PoseParams<f64>,
    result: &'a RunResult,
}

#[derive(Serialize)]
struct AlignSummary<'a> {
    schema_version: u32,
    command: &'static str,
    pose: PoseParams<f64>,
    best_objective: f64,
    restart_index: usize,
    out: &'a Path,
    artifacts: Vec<String>,
}

pub fn run(cli: &Cli, a: &AlignArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let mut o = a.run.overrides();
    o.remesh_vertices = a.remesh;
    o.canonicalize = a.canonicalize.then_some(true);
    o.llm_queries = a.llm_queries;
    o.voxel_resolution = a.metrics.voxel_resolution;
    o.eval_views = a.metrics.eval_views;
    let settings = Settings::resolve(file, o, GuidanceKind::External);
    let mut config = settings.align.clone();
    apply_run_options(&mut config, &a.run);
    if let Some(mode) = a.mode {
        config.mode = mode;
    }
    if let Some(selector) = a.selector {
        config.selector = selector;
    }
    config.master_seed = settings.seed;

    let source = remesh(load_mesh(&a.source)?, settings.remesh_vertices);
    let target = remesh(load_mesh(&a.target)?, settings.remesh_vertices);
    let initial = a.init_pose.as_deref().map(parse_pose).transpose()?.unwrap_or_default();
    let guidance_target = match (&a.prompt, &a.ref_image) {
        (Some(p), _) => GuidanceTarget::text(p.clone()),
        (None, Some(path)) => GuidanceTarget::Image {
            reference_image: Image::<f32>::load_png_rgb(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
        },
        (None, None) => return Err(CliError::usage("one of --prompt or --ref-image is required")),
    };
    let reference_scene = match settings.guidance {
        GuidanceKind::Silhouette => Some(match (&a.ref_scene, &a.ref_pose) {
            (Some(path), _) => load_mesh(path)?,
            (None, Some(pose)) => {
                let placed = apply_pose(&source, &parse_pose(pose)?).map_err(CliError::usage)?;
                compose_scene(&target, &placed)
            }
            (None, None) => return Err(CliError::usage("--guidance silhouette needs --ref-pose or --ref-scene")),
        }),
        _ => None,
    };
    let provider = build_provider(settings.guidance, &settings, reference_scene, &config.shading)?;

    let hparams = if a.llm_hparams {
        let client = LlmClient::from_env();
        if client.is_none() {
            log::warn!("{LLM_URL_ENV} is not set; using default hyperparameters");
        }
        let wanted = a.prompt.clone().unwrap_or_else(|| "the arrangement shown in the reference image".into());
        let decision = suggest(client.as_ref(), &stem(&a.source), &stem(&a.target), &wanted, settings.llm_queries).map_err(CliError::usage)?;
        decision.apply_to(&mut config);
        Some(decision)
    } else {
        None
    };
    config.validate()?;

    let (opt_source, frame, report) = if settings.canonicalize {
        let (mesh, pose, report) = canonical_pose(&source);
        (mesh, Some(pose), Some(report))
    } else {
        (source.clone(), None, None)
    };
    let pose_err = |e: ooalign::pose::PoseError| CliError::Optimization(e.to_string());
    let base = match &frame {
        Some(f) => f.inverse().and_then(|inv| inv.then(&initial)).map_err(pose_err)?,
        None => initial,
    };
    let result = run_alignment(&opt_source, &target, &guidance_target, provider.as_ref(), &config, &base)?;
    let pose = match &frame {
        Some(f) => f.then(&result.best_pose).map_err(pose_err)?,
        None => result.best_pose,
    };
    let posed = apply_pose(&source, &pose).map_err(pose_err)?;
    let scene = compose_scene(&target, &posed);

    let out = &a.out;
    create_dir(out)?;
    let mut artifacts = vec!["posed_source.obj".to_string(), "scene.obj".into(), "pose.json".into(), "steps.jsonl".into(), "run.json".into()];
    save_mesh(&posed, &out.join("posed_source.obj"))?;
    save_mesh(&scene, &out.join("scene.obj"))?;
    write_json(&out.join("pose.json"), &pose)?;
    write_text(&out.join("steps.jsonl"), &result.steps_jsonl())?;
    let record = AlignRecord {
        schema_version: OUTPUT_SCHEMA_VERSION,
        command: "align",
        source: &a.source,
        target: &a.target,
        prompt: a.prompt.as_deref(),
        reference_image: a.ref_image.as_deref(),
        guidance: settings.guidance,
        settings: &settings,
        config: &config,
        hparams: hparams.as_ref(),
        canonicalization: report.as_ref(),
        initial_pose: initial,
        pose,
        result: &result,
    };
    write_json(&out.join("run.json"), &record)?;
    if a.dump_png {
        let views = out.join("views");
        create_dir(&views)?;
        let cams = eval_cameras(&scene, settings.eval_views, &settings.eval_rig).map_err(CliError::runtime)?;
        for (i, cam) in cams.iter().enumerate() {
            let name = format!("view_{i:02}.png");
            let view = RenderedView::render(&scene, cam, settings.eval_rig.softness_px, &config.shading).map_err(CliError::runtime)?;
            view.rgba.save_png(views.join(&name)).map_err(CliError::runtime)?;
            artifacts.push(format!("views/{name}"));
        }
    }

    if cli.json {
        print_json(&AlignSummary {
            schema_version: OUTPUT_SCHEMA_VERSION,
            command: "align",
            pose,
            best_objective: result.best_objective,
            restart_index: result.restart_index,
            out,
            artifacts,
        });
    } else {
        println!("pose: {}", to_json(&pose).split_whitespace().collect::<Vec<_>>().join(" "));
        println!("objective: {:.6} (restart {})", result.best_objective, result.restart_index);
        println!("wrote {} files to {}", artifacts.len(), out.display());
    }
    Ok(())
}
