//! `ooalign eval`.

use clap::ValueEnum;
use ooalign::geometry::{compute_stats, Role, TriMesh};
use ooalign::guidance::GuidanceTarget;
use ooalign::harness::fixtures::merge;
use ooalign::metrics::{contact_fraction, intersection_ratio, semantic_eval, IntersectionReport, SemanticReport};
use ooalign::pose::compose_scene;
use ooalign::render::Shading;
use serde::Serialize;

use crate::align::build_provider;
use crate::config::{ConfigFile, GuidanceKind, Overrides, Settings};
use crate::error::CliError;
use crate::output::{create_dir, load_mesh, print_json, write_json, write_text, OUTPUT_SCHEMA_VERSION};
use crate::{Cli, EvalArgs};

/// Fraction of the target bounding-box diagonal used as the default contact distance.
pub const DEFAULT_CONTACT_EPSILON_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Intersection,
    Contact,
    Semantic,
}

#[derive(Debug, Serialize)]
pub struct ContactReport {
    pub epsilon: f64,
    pub fraction: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalOutput {
    pub schema_version: u32,
    pub command: &'static str,
    pub intersection: Option<IntersectionReport>,
    pub contact: Option<ContactReport>,
    pub semantic: Option<SemanticReport>,
}

impl EvalOutput {
    /// `(metric, value)` rows; an unavailable semantic score has an empty value.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>)> {
        let mut rows = Vec::new();
        if let Some(i) = &self.intersection {
            rows.push(("intersection_ratio", Some(i.ratio)));
            rows.push(("intersection_volume", Some(i.intersection_volume)));
            rows.push(("union_volume", Some(i.union_volume)));
        }
        if let Some(c) = &self.contact {
            rows.push(("contact_epsilon", Some(c.epsilon)));
            rows.push(("contact_fraction", Some(c.fraction)));
        }
        if let Some(s) = &self.semantic {
            rows.push(("semantic_mean", s.mean_score));
        }
        rows
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<24}{:>16}\n", "metric", "value");
        for (name, v) in self.rows() {
            let value = v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "unavailable".into());
            out += &format!("{name:<24}{value:>16}\n");
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, v) in self.rows() {
            out += &format!("{name},{}\n", v.map(|x| format!("{x:.6}")).unwrap_or_default());
        }
        out
    }
}

/// Source-role and target-role parts of a composed scene.
fn split_scene(scene: &TriMesh<f64>) -> Result<(TriMesh<f64>, TriMesh<f64>), CliError> {
    let pick = |role: Role| -> Vec<TriMesh<f64>> {
        (0..scene.parts.len()).filter(|&i| scene.parts[i].role == role).map(|i| scene.part_mesh(i)).collect()
    };
    let (src, tgt) = (pick(Role::Source), pick(Role::Target));
    if src.is_empty() || tgt.is_empty() {
        return Err(CliError::usage("scene needs both source and target parts; use --pair for separate files"));
    }
    Ok((merge("source", &src).with_role(Role::Source), merge("target", &tgt)))
}

pub fn run(cli: &Cli, a: &EvalArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let o = Overrides {
        guidance: a.guidance,
        scorer_addr: a.scorer_addr.clone(),
        voxel_resolution: a.metric_options.voxel_resolution,
        eval_views: a.metric_options.eval_views,
        ..Overrides::default()
    };
    let settings = Settings::resolve(file, o, GuidanceKind::External);
    let (source, target) = match (&a.scene, &a.pair) {
        (Some(path), _) => split_scene(&load_mesh(path)?)?,
        (None, Some(pair)) => (load_mesh(&pair[0])?.with_role(Role::Source), load_mesh(&pair[1])?),
        (None, None) => return Err(CliError::usage("one of --scene or --pair is required")),
    };
    let wants = |m: Metric| a.metrics.contains(&m);

    let mut output = EvalOutput { schema_version: OUTPUT_SCHEMA_VERSION, command: "eval", intersection: None, contact: None, semantic: None };
    if wants(Metric::Intersection) {
        output.intersection = Some(intersection_ratio(&source, &target, settings.voxel_resolution).map_err(CliError::usage)?);
    }
    if wants(Metric::Contact) {
        let epsilon = a.epsilon.unwrap_or_else(|| DEFAULT_CONTACT_EPSILON_FRACTION * compute_stats(&target).diagonal());
        let fraction = contact_fraction(&source, &target, epsilon).map_err(CliError::usage)?;
        output.contact = Some(ContactReport { epsilon, fraction });
    }
    if wants(Metric::Semantic) {
        if settings.guidance == GuidanceKind::Silhouette {
            return Err(CliError::usage("semantic evaluation supports null or external guidance"));
        }
        let prompt = a.prompt.as_ref().ok_or_else(|| CliError::usage("--metrics semantic needs --prompt"))?;
        let shading = Shading::default();
        let provider = build_provider(settings.guidance, &settings, None, &shading)?;
        let scene = compose_scene(&target, &source);
        let report = semantic_eval(&scene, &GuidanceTarget::text(prompt.clone()), provider.as_ref(), settings.eval_views, &settings.eval_rig, &shading)
            .map_err(CliError::usage)?;
        if !report.available {
            return Err(CliError::GuidanceUnavailable(report.error.unwrap_or_else(|| "semantic scorer unavailable".into())));
        }
        output.semantic = Some(report);
    }

    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("metrics.json"), &output)?;
        if a.csv {
            write_text(&out.join("metrics.csv"), &output.csv())?;
        }
    }
    if cli.json {
        print_json(&output);
    } else {
        print!("{}", output.table());
    }
    Ok(())
}
