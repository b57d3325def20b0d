//! Benchmark construction, batch execution, baselines, iterative assembly
//! and run persistence.
//!
//! A run writes everything under `<out>/run-seed<seed>/`:
//! `<case>/<method>/{posed_source.obj, scene.obj, pose.json, steps.jsonl, record.json}`,
//! plus `records.json`, `summary.csv` and `timings.json` at the top. Only
//! `timings.json` depends on wall-clock time.

mod compose;
pub mod fixtures;
mod snap;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use compose::{compose_iterative, ComposeFailure, ComposeResult, ProviderFactory, Stage, StageRecord};
pub use snap::{closest_pair_vector, point_inside, snap_baseline};

use crate::geometry::{compute_stats, load_obj, save_obj, GeometryError, TriMesh};
use crate::guidance::{ExternalProvider, GuidanceProvider, GuidanceTarget, NullProvider, SilhouetteProvider};
use crate::metrics::{intersection_ratio, semantic_eval, EvalRig, IntersectionReport, MetricsError, SemanticReport, DEFAULT_EVAL_VIEWS, DEFAULT_VOXEL_RESOLUTION};
use crate::optimizer::{
    apply_size_ratio, perturbation_about, random_initial_pose, restart_rng, run_alignment, sample_initial_pose, AlignConfig, AlignMode, OptimError,
    RunResult,
};
use crate::pose::{apply_pose, compose_scene, PoseError, PoseParams};
use crate::render::Shading;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const RECORD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Pose(#[from] PoseError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// A mesh pair with a prompt and its ground-truth arrangement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub source_path: PathBuf,
    pub target_path: PathBuf,
    pub prompt: String,
    /// Places the source in its reference arrangement relative to the target.
    pub reference_pose: PoseParams<f64>,
    pub mode: AlignMode,
}

/// On-disk manifest. A bare JSON array of cases is also accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub cases: Vec<BenchmarkCase>,
}

/// Parses a manifest and resolves case paths against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<BenchmarkCase>, HarnessError> {
    let bad = |m: String| HarnessError::Manifest(m);
    let value: Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
    let mut cases: Vec<BenchmarkCase> = if value.is_array() {
        serde_json::from_value(value).map_err(|e| bad(e.to_string()))?
    } else {
        let m: Manifest = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(bad(format!("unsupported schema_version {} (expected {MANIFEST_SCHEMA_VERSION})", m.schema_version)));
        }
        m.cases
    };
    let mut seen = std::collections::BTreeSet::new();
    for c in &mut cases {
        if c.id.is_empty() || c.id.contains(['/', '\\']) || c.id.starts_with('.') {
            return Err(bad(format!("case id `{}` is not a plain name", c.id)));
        }
        if !seen.insert(c.id.clone()) {
            return Err(bad(format!("duplicate case id `{}`", c.id)));
        }
        if !c.reference_pose.is_finite() {
            return Err(bad(format!("case `{}` has a non-finite reference pose", c.id)));
        }
        c.source_path = base_dir.join(&c.source_path);
        c.target_path = base_dir.join(&c.target_path);
    }
    Ok(cases)
}

pub fn load_manifest(path: &Path) -> Result<Vec<BenchmarkCase>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(path.display().to_string(), e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Per-case seed derived from the master seed and the case id, so a case's
/// randomness does not depend on its position or on scheduling.
pub fn case_seed(master: u64, case_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in case_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ master.rotate_left(17)
}

/// Start pose for a placed source: the reference pose followed by a protocol
/// perturbation about the placed source's centroid, with ranges taken from
/// the placed source's own bounding box. Only the source is perturbed.
pub fn perturb_pose(source: &TriMesh<f64>, reference: &PoseParams<f64>, mode: AlignMode, rng: &mut ChaCha8Rng) -> Result<PoseParams<f64>, HarnessError> {
    let placed = apply_pose(source, reference)?;
    let stats = compute_stats(&placed);
    let perturbation = random_initial_pose(rng, &stats, mode);
    Ok(reference.then(&perturbation_about(stats.centroid, &perturbation)?)?)
}

pub fn perturb_case(case: &BenchmarkCase, rng: &mut ChaCha8Rng) -> Result<PoseParams<f64>, HarnessError> {
    let source = load_obj::<f64>(&case.source_path)?;
    perturb_pose(&source, &case.reference_pose, case.mode, rng)
}

/// The start pose a benchmark run with `master_seed` uses for `case`.
pub fn case_initial_pose(case: &BenchmarkCase, master_seed: u64) -> Result<PoseParams<f64>, HarnessError> {
    perturb_case(case, &mut ChaCha8Rng::seed_from_u64(case_seed(master_seed, &case.id)))
}

/// Starting poses `run_alignment` would draw for each restart from `base`.
pub fn restart_starts(source: &TriMesh<f64>, target: &TriMesh<f64>, config: &AlignConfig, base: &PoseParams<f64>) -> Result<Vec<PoseParams<f64>>, HarnessError> {
    let target_stats = compute_stats(target);
    let base = apply_size_ratio(source, target_stats.diagonal(), base, config)?;
    let base_stats = compute_stats(&apply_pose(source, &base)?);
    (0..config.restarts)
        .map(|i| {
            let mut rng = restart_rng(config.master_seed, i);
            Ok(sample_initial_pose(&mut rng, &config.init, &base, &base_stats, &target_stats)?)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Guided phased optimization with restarts.
    Method,
    /// Translate the perturbed source into contact with the target.
    Snap,
    /// Snap from every restart start pose; keep the best semantic score.
    MultistartSnap,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Method, Method::Snap, Method::MultistartSnap];

    pub fn name(self) -> &'static str {
        match self {
            Method::Method => "method",
            Method::Snap => "snap",
            Method::MultistartSnap => "multistart_snap",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown method `{s}` (expected method, snap or multistart_snap)"))
    }
}

/// Guidance used for optimization and semantic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuidanceChoice {
    Null,
    /// Silhouettes of the case's reference arrangement.
    Silhouette,
    External { addr: String },
}

impl GuidanceChoice {
    pub fn provider(&self, reference_scene: &TriMesh<f64>, shading: &Shading) -> Box<dyn GuidanceProvider<f64>> {
        match self {
            GuidanceChoice::Null => Box::new(NullProvider),
            GuidanceChoice::Silhouette => Box::new(SilhouetteProvider::from_scene(reference_scene.clone(), shading.clone())),
            GuidanceChoice::External { addr } => Box::new(ExternalProvider::new(addr.clone())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    /// Mode and master seed are overridden per case.
    pub config: AlignConfig,
    pub methods: Vec<Method>,
    pub guidance: GuidanceChoice,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Cases run concurrently on this many threads; 0 uses the global pool.
    pub workers: usize,
    pub voxel_resolution: usize,
    pub eval_views: usize,
    pub eval_rig: EvalRig,
}

impl BenchmarkOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config: AlignConfig::default(),
            methods: Method::ALL.to_vec(),
            guidance: GuidanceChoice::Silhouette,
            master_seed: 0,
            out_dir: out_dir.into(),
            workers: 0,
            voxel_resolution: DEFAULT_VOXEL_RESOLUTION,
            eval_views: DEFAULT_EVAL_VIEWS,
            eval_rig: EvalRig::default(),
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(format!("run-seed{}", self.master_seed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    Failed,
}

/// Deviation of a final pose from the reference arrangement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceError {
    /// Source centroid displacement over the target bbox diagonal.
    pub translation: f64,
    pub rotation_deg: f64,
    pub log_scale: f64,
}

pub fn reference_error(source: &TriMesh<f64>, target: &TriMesh<f64>, pose: &PoseParams<f64>, reference: &PoseParams<f64>) -> Result<ReferenceError, HarnessError> {
    let got = compute_stats(&apply_pose(source, pose)?).centroid;
    let want = compute_stats(&apply_pose(source, reference)?).centroid;
    Ok(ReferenceError {
        translation: (got - want).norm() / compute_stats(target).diagonal(),
        rotation_deg: pose.unit_quat()?.angle_to(reference.unit_quat()?).to_degrees(),
        log_scale: (pose.log_scale - reference.log_scale).abs(),
    })
}

/// Artifact paths relative to the run directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub record: PathBuf,
    pub posed_source: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub pose: Option<PathBuf>,
    pub steps: Option<PathBuf>,
}

/// Wall-clock seconds; kept out of the deterministic files.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total: f64,
    pub align: f64,
    pub metrics: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub case_id: String,
    pub method: Method,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seed: u64,
    pub config: AlignConfig,
    pub initial_pose: Option<PoseParams<f64>>,
    pub final_pose: Option<PoseParams<f64>>,
    /// Restart chosen by the multi-start baseline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_start: Option<usize>,
    pub run_result: Option<RunResult>,
    pub intersection: Option<IntersectionReport>,
    pub semantic: Option<SemanticReport>,
    pub reference_error: Option<ReferenceError>,
    pub artifacts: Artifacts,
    #[serde(skip)]
    pub timings: Timings,
}

/// Per-method means over successful records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub cases: usize,
    pub failed: usize,
    pub semantic_mean: Option<f64>,
    pub intersection_mean: Option<f64>,
    pub translation_error_mean: Option<f64>,
    pub rotation_error_deg_mean: Option<f64>,
}

pub const SUMMARY_HEADER: &str = "method,cases,failed,semantic_mean,intersection_mean,translation_error_mean,rotation_error_deg_mean";

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(records: &[RunRecord], methods: &[Method]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|&m| {
            let all: Vec<&RunRecord> = records.iter().filter(|r| r.method == m).collect();
            let ok: Vec<&RunRecord> = all.iter().copied().filter(|r| r.status == RecordStatus::Ok).collect();
            SummaryRow {
                method: m,
                cases: all.len(),
                failed: all.len() - ok.len(),
                semantic_mean: mean(ok.iter().filter_map(|r| r.semantic.as_ref().and_then(|s| s.mean_score))),
                intersection_mean: mean(ok.iter().filter_map(|r| r.intersection.as_ref().map(|i| i.ratio))),
                translation_error_mean: mean(ok.iter().filter_map(|r| r.reference_error.map(|e| e.translation))),
                rotation_error_deg_mean: mean(ok.iter().filter_map(|r| r.reference_error.map(|e| e.rotation_deg))),
            }
        })
        .collect()
}

/// Fixed six-decimal formatting; missing values are left empty.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method.name(),
            r.cases,
            r.failed,
            f(r.semantic_mean),
            f(r.intersection_mean),
            f(r.translation_error_mean),
            f(r.rotation_error_deg_mean)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub run_dir: PathBuf,
    /// Case-major, then in the order of `options.methods`.
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub summary_csv: String,
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.display().to_string(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| HarnessError::Io(path.display().to_string(), e))
}

fn to_json<S: Serialize>(value: &S) -> String {
    serde_json::to_string_pretty(value).expect("record serializes") + "\n"
}

/// Loaded inputs shared by every method of one case.
struct CaseInputs {
    source: TriMesh<f64>,
    target: TriMesh<f64>,
    initial: PoseParams<f64>,
    provider: Box<dyn GuidanceProvider<f64>>,
    config: AlignConfig,
    guidance_target: GuidanceTarget,
}

fn prepare_case(case: &BenchmarkCase, options: &BenchmarkOptions, seed: u64) -> Result<CaseInputs, HarnessError> {
    let source = load_obj::<f64>(&case.source_path)?;
    let target = load_obj::<f64>(&case.target_path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial = perturb_pose(&source, &case.reference_pose, case.mode, &mut rng)?;
    let reference_scene = compose_scene(&target, &apply_pose(&source, &case.reference_pose)?);
    let mut config = options.config.clone();
    config.mode = case.mode;
    config.master_seed = seed;
    let provider = options.guidance.provider(&reference_scene, &config.shading);
    Ok(CaseInputs { source, target, initial, provider, config, guidance_target: GuidanceTarget::text(&case.prompt) })
}

struct Outcome {
    final_pose: PoseParams<f64>,
    run_result: Option<RunResult>,
    selected_start: Option<usize>,
    semantic: Option<SemanticReport>,
}

fn evaluate_scene(inputs: &CaseInputs, options: &BenchmarkOptions, pose: &PoseParams<f64>) -> Result<(TriMesh<f64>, TriMesh<f64>, SemanticReport), HarnessError> {
    let posed = apply_pose(&inputs.source, pose)?;
    let scene = compose_scene(&inputs.target, &posed);
    let semantic = semantic_eval(&scene, &inputs.guidance_target, inputs.provider.as_ref(), options.eval_views, &options.eval_rig, &inputs.config.shading)?;
    Ok((posed, scene, semantic))
}

fn run_method(inputs: &CaseInputs, options: &BenchmarkOptions, method: Method) -> Result<Outcome, HarnessError> {
    let snap_from = |start: &PoseParams<f64>| -> Result<PoseParams<f64>, HarnessError> {
        let posed = apply_pose(&inputs.source, start)?;
        Ok(start.then(&snap_baseline(&posed, &inputs.target))?)
    };
    match method {
        Method::Method => {
            let result = run_alignment(&inputs.source, &inputs.target, &inputs.guidance_target, inputs.provider.as_ref(), &inputs.config, &inputs.initial)?;
            Ok(Outcome { final_pose: result.best_pose, run_result: Some(result), selected_start: None, semantic: None })
        }
        Method::Snap => Ok(Outcome { final_pose: snap_from(&inputs.initial)?, run_result: None, selected_start: None, semantic: None }),
        Method::MultistartSnap => {
            let starts = restart_starts(&inputs.source, &inputs.target, &inputs.config, &inputs.initial)?;
            let mut best: Option<(usize, PoseParams<f64>, SemanticReport)> = None;
            for (i, start) in starts.iter().enumerate() {
                let pose = snap_from(start)?;
                let (_, _, report) = evaluate_scene(inputs, options, &pose)?;
                let better = match &best {
                    None => true,
                    Some((_, _, b)) => report.mean_score.unwrap_or(f64::NEG_INFINITY) > b.mean_score.unwrap_or(f64::NEG_INFINITY),
                };
                if better {
                    best = Some((i, pose, report));
                }
            }
            let (i, pose, report) = best.ok_or_else(|| HarnessError::Invalid("no restart start poses".into()))?;
            Ok(Outcome { final_pose: pose, run_result: None, selected_start: Some(i), semantic: Some(report) })
        }
    }
}

fn failed_record(case_id: &str, method: Method, seed: u64, config: AlignConfig, initial: Option<PoseParams<f64>>, error: String, rel: &Path) -> RunRecord {
    RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        case_id: case_id.to_string(),
        method,
        status: RecordStatus::Failed,
        error: Some(error),
        seed,
        config,
        initial_pose: initial,
        final_pose: None,
        selected_start: None,
        run_result: None,
        intersection: None,
        semantic: None,
        reference_error: None,
        artifacts: Artifacts { record: rel.join("record.json"), ..Artifacts::default() },
        timings: Timings::default(),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_record(
    case: &BenchmarkCase,
    inputs: &CaseInputs,
    options: &BenchmarkOptions,
    method: Method,
    outcome: Outcome,
    seed: u64,
    rel: &Path,
    align_secs: f64,
) -> Result<RunRecord, HarnessError> {
    let run_dir = options.run_dir();
    let t0 = Instant::now();
    let (posed, scene, evaluated) = evaluate_scene(inputs, options, &outcome.final_pose)?;
    let semantic = outcome.semantic.unwrap_or(evaluated);
    let intersection = intersection_ratio(&posed, &inputs.target, options.voxel_resolution)?;
    let reference_error = reference_error(&inputs.source, &inputs.target, &outcome.final_pose, &case.reference_pose)?;
    let metrics_secs = t0.elapsed().as_secs_f64();

    let mut artifacts = Artifacts {
        record: rel.join("record.json"),
        posed_source: Some(rel.join("posed_source.obj")),
        scene: Some(rel.join("scene.obj")),
        pose: Some(rel.join("pose.json")),
        steps: None,
    };
    std::fs::create_dir_all(run_dir.join(rel)).map_err(|e| HarnessError::Io(run_dir.join(rel).display().to_string(), e))?;
    save_obj(&posed, run_dir.join(rel).join("posed_source.obj"))?;
    save_obj(&scene, run_dir.join(rel).join("scene.obj"))?;
    write_file(&run_dir.join(rel).join("pose.json"), &to_json(&outcome.final_pose))?;
    if let Some(r) = &outcome.run_result {
        write_file(&run_dir.join(rel).join("steps.jsonl"), &r.steps_jsonl())?;
        artifacts.steps = Some(rel.join("steps.jsonl"));
    }
    Ok(RunRecord {
        schema_version: RECORD_SCHEMA_VERSION,
        case_id: case.id.clone(),
        method,
        status: RecordStatus::Ok,
        error: None,
        seed,
        config: inputs.config.clone(),
        initial_pose: Some(inputs.initial),
        final_pose: Some(outcome.final_pose),
        selected_start: outcome.selected_start,
        run_result: outcome.run_result,
        intersection: Some(intersection),
        semantic: Some(semantic),
        reference_error: Some(reference_error),
        artifacts,
        timings: Timings { total: 0.0, align: align_secs, metrics: metrics_secs },
    })
}

fn run_case(case: &BenchmarkCase, options: &BenchmarkOptions) -> Vec<RunRecord> {
    let seed = case_seed(options.master_seed, &case.id);
    let run_dir = options.run_dir();
    let inputs = prepare_case(case, options, seed);
    let mut records = Vec::new();
    for &method in &options.methods {
        let start = Instant::now();
        let rel = PathBuf::from(&case.id).join(method.name());
        let mut record = match &inputs {
            Err(e) => failed_record(&case.id, method, seed, options.config.clone(), None, e.to_string(), &rel),
            Ok(inputs) => {
                let outcome = run_method(inputs, options, method);
                let align_secs = start.elapsed().as_secs_f64();
                match outcome.and_then(|o| finish_record(case, inputs, options, method, o, seed, &rel, align_secs)) {
                    Ok(r) => r,
                    Err(e) => failed_record(&case.id, method, seed, inputs.config.clone(), Some(inputs.initial), e.to_string(), &rel),
                }
            }
        };
        record.timings.total = start.elapsed().as_secs_f64();
        if let Err(e) = write_file(&run_dir.join(&record.artifacts.record), &to_json(&record)) {
            log::error!("{}: {e}", case.id);
        }
        if record.status == RecordStatus::Failed {
            log::warn!("{} / {}: {}", case.id, method.name(), record.error.as_deref().unwrap_or(""));
        }
        records.push(record);
    }
    records
}

/// Runs every case of the manifest with every requested method, writes the
/// run directory and returns the records and per-method summary.
pub fn run_benchmark(manifest: &Path, options: &BenchmarkOptions) -> Result<BenchmarkReport, HarnessError> {
    let cases = load_manifest(manifest)?;
    run_cases(&cases, options)
}

pub fn run_cases(cases: &[BenchmarkCase], options: &BenchmarkOptions) -> Result<BenchmarkReport, HarnessError> {
    if options.methods.is_empty() {
        return Err(HarnessError::Invalid("no methods selected".into()));
    }
    let run_dir = options.run_dir();
    std::fs::create_dir_all(&run_dir).map_err(|e| HarnessError::Io(run_dir.display().to_string(), e))?;
    let run_all = || cases.par_iter().map(|c| run_case(c, options)).collect::<Vec<_>>();
    let per_case = if options.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers)
            .build()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?
            .install(run_all)
    } else {
        run_all()
    };
    let records: Vec<RunRecord> = per_case.into_iter().flatten().collect();
    let summary = summarize(&records, &options.methods);
    let csv = summary_csv(&summary);
    write_file(&run_dir.join("records.json"), &to_json(&records))?;
    write_file(&run_dir.join("summary.csv"), &csv)?;
    let timings: Vec<Value> = records
        .iter()
        .map(|r| serde_json::json!({ "case_id": r.case_id, "method": r.method, "timings": r.timings }))
        .collect();
    write_file(&run_dir.join("timings.json"), &to_json(&timings))?;
    Ok(BenchmarkReport { run_dir, records, summary, summary_csv: csv })
}
