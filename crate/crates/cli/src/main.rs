//! `ooalign`: align, evaluate, benchmark, perturb and compose meshes.

mod align;
mod batch;
mod config;
mod error;
mod eval;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use ooalign::guidance::SCORER_ADDR_ENV;
use ooalign::optimizer::{AlignMode, Selector};

use config::{GuidanceKind, Overrides, GUIDANCE_ENV, SEED_ENV, WORKERS_ENV};
use error::CliError;

const EXIT_CODES: &str = "Exit codes: 0 success, 1 I/O or runtime failure, 2 invalid arguments, \
3 guidance provider unavailable, 4 optimization failure.";

#[derive(Debug, Parser)]
#[command(name = "ooalign", version, about = "Test-time mesh-to-mesh alignment", after_help = EXIT_CODES)]
pub struct Cli {
    /// Print machine-readable JSON on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// JSON settings file (see README for the schema).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align a source mesh to a target mesh.
    Align(AlignArgs),
    /// Compute metrics for a composed scene or a source/target pair.
    Eval(EvalArgs),
    /// Run every method over a benchmark manifest.
    Bench(BenchArgs),
    /// Print the randomized start pose of one benchmark case.
    Perturb(PerturbArgs),
    /// Place several meshes one after another, each against everything before it.
    Compose(ComposeArgs),
    /// Write the synthetic fixture cases and their manifest.
    Fixtures(FixturesArgs),
}

/// Options shared by commands that run the optimizer.
#[derive(Debug, Clone, Args)]
pub struct RunOptions {
    /// Master seed for every random draw.
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Guidance provider.
    #[arg(long, value_enum, env = GUIDANCE_ENV)]
    pub guidance: Option<GuidanceKind>,
    /// Address (host:port) of the external scorer.
    #[arg(long, value_name = "HOST:PORT", env = SCORER_ADDR_ENV)]
    pub scorer_addr: Option<String>,
    /// Total optimization steps per restart.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Number of restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
}

/// Options shared by commands that compute metrics.
#[derive(Debug, Clone, Args)]
pub struct MetricOptions {
    /// Voxels per axis for the intersection ratio.
    #[arg(long)]
    pub voxel_resolution: Option<usize>,
    /// Views of the fixed evaluation rig.
    #[arg(long)]
    pub eval_views: Option<usize>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target_spec").required(true).args(["prompt", "ref_image"]))]
pub struct AlignArgs {
    /// Mesh to be posed.
    #[arg(long, value_name = "OBJ")]
    pub source: PathBuf,
    /// Fixed mesh the source is placed against.
    #[arg(long, value_name = "OBJ")]
    pub target: PathBuf,
    /// Text describing the wanted arrangement.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Reference image (PNG) of the wanted arrangement.
    #[arg(long, value_name = "PNG")]
    pub ref_image: Option<PathBuf>,
    /// Output directory; nothing is written elsewhere.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Pose parameterization: rigid or scaled.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<AlignMode>,
    /// Restart selection rule.
    #[arg(long, value_parser = parse_selector)]
    pub selector: Option<Selector>,
    /// Starting pose of the source, as JSON text or a JSON file.
    #[arg(long, value_name = "POSE")]
    pub init_pose: Option<String>,
    /// Silhouette guidance: source pose of the reference arrangement (JSON text or file).
    #[arg(long, value_name = "POSE", conflicts_with = "ref_scene")]
    pub ref_pose: Option<String>,
    /// Silhouette guidance: OBJ of the reference arrangement.
    #[arg(long, value_name = "OBJ")]
    pub ref_scene: Option<PathBuf>,
    /// Rotate the source to a principal-axis upright frame before aligning.
    #[arg(long)]
    pub canonicalize: bool,
    /// Minimum vertex count after subdivision (0 disables remeshing).
    #[arg(long, value_name = "N")]
    pub remesh: Option<usize>,
    /// Save PNG renders of the final scene from the evaluation rig.
    #[arg(long)]
    pub dump_png: bool,
    /// Ask a language model for size ratio, penetration and contact ratio.
    #[arg(long)]
    pub llm_hparams: bool,
    /// Number of language-model queries to aggregate.
    #[arg(long, value_name = "N")]
    pub llm_queries: Option<usize>,
    #[command(flatten)]
    pub run: RunOptions,
    #[command(flatten)]
    pub metrics: MetricOptions,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["scene", "pair"]))]
pub struct EvalArgs {
    /// Composed scene OBJ with source and target roles.
    #[arg(long, value_name = "OBJ")]
    pub scene: Option<PathBuf>,
    /// Source and target OBJ files.
    #[arg(long, num_args = 2, value_names = ["SOURCE", "TARGET"])]
    pub pair: Option<Vec<PathBuf>>,
    /// Metrics to compute.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "intersection,contact")]
    pub metrics: Vec<eval::Metric>,
    /// Contact distance (default 0.01 x target bounding-box diagonal).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Prompt for the semantic score.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Guidance provider for the semantic score (null or external).
    #[arg(long, value_enum, env = GUIDANCE_ENV)]
    pub guidance: Option<GuidanceKind>,
    #[arg(long, value_name = "HOST:PORT", env = SCORER_ADDR_ENV)]
    pub scorer_addr: Option<String>,
    /// Write metrics.json (and metrics.csv with --csv) here.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write metrics.csv into --out.
    #[arg(long, requires = "out")]
    pub csv: bool,
    #[command(flatten)]
    pub metric_options: MetricOptions,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark manifest listing the cases.
    #[arg(long, value_name = "JSON")]
    pub manifest: PathBuf,
    /// Methods to run (method, snap, multistart_snap).
    #[arg(long, value_delimiter = ',', default_value = "method,snap,multistart_snap")]
    pub methods: Vec<ooalign::harness::Method>,
    /// Cases run concurrently (0 uses every core).
    #[arg(long, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    /// Parent directory of the seed-stamped run directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunOptions,
    #[command(flatten)]
    pub metrics: MetricOptions,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Benchmark manifest listing the cases.
    #[arg(long, value_name = "JSON")]
    pub manifest: PathBuf,
    /// Case id within the manifest.
    #[arg(long = "case", value_name = "ID")]
    pub case_id: String,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Also write the start pose and the perturbed source here.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    /// Stage list (see README for the schema).
    #[arg(long, value_name = "JSON")]
    pub stages: PathBuf,
    /// Output directory for the composed scene.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Minimum vertex count after subdivision (0 disables remeshing).
    #[arg(long, value_name = "N")]
    pub remesh: Option<usize>,
    #[command(flatten)]
    pub run: RunOptions,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    /// Directory to write the fixture meshes and manifest into.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Subdivide every mesh to at least this many vertices.
    #[arg(long, default_value_t = 0)]
    pub min_vertices: usize,
}

fn parse_mode(s: &str) -> Result<AlignMode, String> {
    match s {
        "rigid" => Ok(AlignMode::Rigid),
        "scaled" => Ok(AlignMode::Scaled),
        _ => Err(format!("unknown mode `{s}` (expected rigid or scaled)")),
    }
}

fn parse_selector(s: &str) -> Result<Selector, String> {
    match s {
        "objective" => Ok(Selector::Objective),
        "guidance_score" => Ok(Selector::GuidanceScore),
        _ => Err(format!("unknown selector `{s}` (expected objective or guidance_score)")),
    }
}

impl RunOptions {
    pub fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, guidance: self.guidance, scorer_addr: self.scorer_addr.clone(), ..Overrides::default() }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Align(a) => align::run(cli, a),
        Command::Eval(a) => eval::run(cli, a),
        Command::Bench(a) => batch::bench(cli, a),
        Command::Perturb(a) => batch::perturb(cli, a),
        Command::Compose(a) => batch::compose(cli, a),
        Command::Fixtures(a) => batch::fixtures(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => Cli::command().error(ErrorKind::ValueValidation, m).exit(),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
