//! Hyperparameter suggestions from a language model: prompts, answer
//! parsing with clamps and defaults, and accuracy against labels.

mod client;

pub use client::{extract_text, LlmClient, LLM_KEY_ENV, LLM_URL_ENV};

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::optimizer::AlignConfig;

pub const SIZE_RATIO_RANGE: (f64, f64) = (0.1, 10.0);
pub const DEFAULT_SIZE_RATIO: f64 = 1.0;
pub const DEFAULT_PENETRATION: bool = false;
pub const DEFAULT_CONTACT_RATIO: f64 = 0.3;
/// Smallest soft-ICP ratio derived from a contact estimate; the ratio must stay positive.
pub const MIN_ICP_RATIO: f64 = 0.01;

const SIZE_TEMPLATE: &str = "Estimate the relative scale needed so that object1=\"{object1}\" and object2=\"{object2}\" fit together naturally in the desired alignment \"{wanted_alignment}\".\nDefine size_ratio = bbox_size(object1) / bbox_size(object2).\nOutput exactly one JSON object: {\"size_ratio\": <float between 0.01 and 100.0>}.";
const PENETRATION_TEMPLATE: &str = "Decide whether achieving alignment \"{wanted_alignment}\" between object1=\"{object1}\" and object2=\"{object2} REQUIRES solid-to-solid penetration.\nOutput exactly one JSON object: {\"penetration\": <true|false>}.";
const CONTACT_TEMPLATE: &str = "For the desired alignment \"{wanted_alignment}\", estimate the fraction of surface contact between object1=\"{object1}\" and object2=\"{object2}\".\nDefine contact_ratio in [0,1], where 0 = almost no contact and 1 = full surface contact.\nOutput exactly one JSON object: {\"contact_ratio\": <float 0..1>}.";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum HparamError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("language model request failed: {0}")]
    Request(String),
    #[error("labels and decisions do not match: {0}")]
    IdMismatch(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompts {
    pub size_ratio: String,
    pub penetration: String,
    pub contact_ratio: String,
}

impl Prompts {
    pub fn as_array(&self) -> [&str; 3] {
        [&self.size_ratio, &self.penetration, &self.contact_ratio]
    }
}

/// The three question prompts with the placeholders filled in.
pub fn build_prompts(object1: &str, object2: &str, wanted_alignment: &str) -> Result<Prompts, HparamError> {
    for (name, v) in [("object1", object1), ("object2", object2), ("wanted_alignment", wanted_alignment)] {
        if v.trim().is_empty() {
            return Err(HparamError::Invalid(format!("{name} must not be empty")));
        }
    }
    let fill = |t: &str| t.replace("{object1}", object1).replace("{object2}", object2).replace("{wanted_alignment}", wanted_alignment);
    Ok(Prompts { size_ratio: fill(SIZE_TEMPLATE), penetration: fill(PENETRATION_TEMPLATE), contact_ratio: fill(CONTACT_TEMPLATE) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Llm,
    Default,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldProvenance {
    pub size_ratio: Provenance,
    pub penetration: Provenance,
    pub contact_ratio: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HparamDecision {
    pub size_ratio: f64,
    pub penetration_allowed: bool,
    pub contact_ratio: f64,
    pub provenance: FieldProvenance,
    /// Model answers exactly as received.
    pub raw_responses: Vec<String>,
}

impl Default for HparamDecision {
    fn default() -> Self {
        Self {
            size_ratio: DEFAULT_SIZE_RATIO,
            penetration_allowed: DEFAULT_PENETRATION,
            contact_ratio: DEFAULT_CONTACT_RATIO,
            provenance: FieldProvenance { size_ratio: Provenance::Default, penetration: Provenance::Default, contact_ratio: Provenance::Default },
            raw_responses: Vec::new(),
        }
    }
}

impl HparamDecision {
    /// User-supplied values, clamped like model answers.
    pub fn manual(size_ratio: f64, penetration_allowed: bool, contact_ratio: f64) -> Self {
        Self {
            size_ratio: clamp_size(size_ratio).unwrap_or(DEFAULT_SIZE_RATIO),
            penetration_allowed,
            contact_ratio: clamp_contact(contact_ratio).unwrap_or(DEFAULT_CONTACT_RATIO),
            provenance: FieldProvenance { size_ratio: Provenance::Manual, penetration: Provenance::Manual, contact_ratio: Provenance::Manual },
            raw_responses: Vec::new(),
        }
    }

    /// Canonical single-line answers that parse back to the same values.
    pub fn to_responses(&self) -> [String; 3] {
        [
            serde_json::json!({ "size_ratio": self.size_ratio }).to_string(),
            serde_json::json!({ "penetration": self.penetration_allowed }).to_string(),
            serde_json::json!({ "contact_ratio": self.contact_ratio }).to_string(),
        ]
    }

    /// Applies the decision: contact ratio becomes the soft-ICP ratio,
    /// allowed penetration drops the penetration term, and the size ratio
    /// sets the initial scale (ignored in rigid mode).
    pub fn apply_to(&self, config: &mut AlignConfig) {
        config.icp_ratio = self.contact_ratio.max(MIN_ICP_RATIO);
        config.allow_penetration = self.penetration_allowed;
        config.size_ratio = Some(self.size_ratio);
    }
}

fn clamp_size(v: f64) -> Option<f64> {
    v.is_finite().then(|| v.clamp(SIZE_RATIO_RANGE.0, SIZE_RATIO_RANGE.1))
}

fn clamp_contact(v: f64) -> Option<f64> {
    v.is_finite().then(|| v.clamp(0.0, 1.0))
}

/// First JSON object embedded anywhere in `text`.
pub fn first_json_object(text: &str) -> Option<serde_json::Map<String, Value>> {
    text.match_indices('{').find_map(|(i, _)| {
        let mut it = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match it.next() {
            Some(Ok(Value::Object(m))) => Some(m),
            _ => None,
        }
    })
}

fn field(text: &str, key: &str) -> Option<Value> {
    first_json_object(text).and_then(|m| m.get(key).cloned())
}

/// Decision from the three answers (size, penetration, contact, in prompt
/// order). Unusable answers fall back per field to the defaults.
pub fn parse_and_clamp(responses: &[String; 3]) -> HparamDecision {
    let mut d = HparamDecision { raw_responses: responses.to_vec(), ..HparamDecision::default() };
    if let Some(v) = field(&responses[0], "size_ratio").and_then(|v| v.as_f64()).and_then(clamp_size) {
        d.size_ratio = v;
        d.provenance.size_ratio = Provenance::Llm;
    }
    if let Some(v) = field(&responses[1], "penetration").and_then(|v| v.as_bool()) {
        d.penetration_allowed = v;
        d.provenance.penetration = Provenance::Llm;
    }
    if let Some(v) = field(&responses[2], "contact_ratio").and_then(|v| v.as_f64()).and_then(clamp_contact) {
        d.contact_ratio = v;
        d.provenance.contact_ratio = Provenance::Llm;
    }
    d
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Combines repeated queries: median of the continuous fields and majority
/// vote on penetration (ties resolve to no penetration), over answers that
/// came from the model. Raw responses are concatenated in order.
pub fn aggregate(decisions: &[HparamDecision]) -> HparamDecision {
    let mut out = HparamDecision { raw_responses: decisions.iter().flat_map(|d| d.raw_responses.clone()).collect(), ..HparamDecision::default() };
    let llm = |f: fn(&FieldProvenance) -> Provenance| decisions.iter().filter(move |d| f(&d.provenance) == Provenance::Llm);
    if let Some(m) = median(llm(|p| p.size_ratio).map(|d| d.size_ratio).collect()) {
        out.size_ratio = m;
        out.provenance.size_ratio = Provenance::Llm;
    }
    let votes: Vec<bool> = llm(|p| p.penetration).map(|d| d.penetration_allowed).collect();
    if !votes.is_empty() {
        let yes = votes.iter().filter(|v| **v).count();
        out.penetration_allowed = 2 * yes > votes.len();
        out.provenance.penetration = Provenance::Llm;
    }
    if let Some(m) = median(llm(|p| p.contact_ratio).map(|d| d.contact_ratio).collect()) {
        out.contact_ratio = m;
        out.provenance.contact_ratio = Provenance::Llm;
    }
    out
}

/// Uniform guess over the answer ranges: size in [0.1, 10], fair coin, contact in [0, 1].
pub fn random_decision<R: Rng + ?Sized>(rng: &mut R) -> HparamDecision {
    let mut d = HparamDecision::manual(
        rng.random_range(SIZE_RATIO_RANGE.0..=SIZE_RATIO_RANGE.1),
        rng.random_bool(0.5),
        rng.random_range(0.0..=1.0),
    );
    d.provenance = FieldProvenance { size_ratio: Provenance::Default, penetration: Provenance::Default, contact_ratio: Provenance::Default };
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HparamLabel {
    pub id: String,
    pub size_ratio: f64,
    pub penetration: bool,
    pub contact_ratio: f64,
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<HparamLabel>, HparamError> {
    let p = path.as_ref();
    let text = std::fs::read_to_string(p).map_err(|e| HparamError::Io(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| HparamError::Invalid(format!("{}: {e}", p.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub cases: usize,
    /// Percentage of cases with the right penetration call.
    pub penetration_accuracy: f64,
    pub size_ratio_mae: f64,
    pub contact_ratio_mae: f64,
}

/// Scores decisions against labels, paired by id. Both sides must carry the same ids.
pub fn evaluate_hparam_accuracy(labels: &[HparamLabel], decisions: &[(String, HparamDecision)]) -> Result<AccuracyReport, HparamError> {
    let mut by_id: BTreeMap<&str, &HparamDecision> = BTreeMap::new();
    for (id, d) in decisions {
        if by_id.insert(id, d).is_some() {
            return Err(HparamError::IdMismatch(format!("duplicate decision id {id}")));
        }
    }
    if labels.is_empty() {
        return Err(HparamError::Invalid("no labels".into()));
    }
    if labels.len() != by_id.len() {
        return Err(HparamError::IdMismatch(format!("{} labels but {} decisions", labels.len(), by_id.len())));
    }
    let (mut correct, mut size_err, mut contact_err) = (0usize, 0.0, 0.0);
    for l in labels {
        let d = by_id.get(l.id.as_str()).ok_or_else(|| HparamError::IdMismatch(format!("no decision for {}", l.id)))?;
        correct += usize::from(d.penetration_allowed == l.penetration);
        size_err += (d.size_ratio - l.size_ratio).abs();
        contact_err += (d.contact_ratio - l.contact_ratio).abs();
    }
    let n = labels.len() as f64;
    Ok(AccuracyReport {
        cases: labels.len(),
        penetration_accuracy: 100.0 * correct as f64 / n,
        size_ratio_mae: size_err / n,
        contact_ratio_mae: contact_err / n,
    })
}

/// Asks the model all three questions `queries` times and aggregates.
/// Without a client the defaults are returned immediately.
pub fn suggest(client: Option<&LlmClient>, object1: &str, object2: &str, wanted_alignment: &str, queries: usize) -> Result<HparamDecision, HparamError> {
    let prompts = build_prompts(object1, object2, wanted_alignment)?;
    let Some(client) = client else {
        return Ok(HparamDecision::default());
    };
    let mut decisions = Vec::with_capacity(queries.max(1));
    for _ in 0..queries.max(1) {
        let answers = prompts.as_array().map(|p| client.complete(p).unwrap_or_else(|e| {
            log::warn!("{e}; using defaults for this answer");
            String::new()
        }));
        decisions.push(parse_and_clamp(&answers));
    }
    Ok(if decisions.len() == 1 { decisions.remove(0) } else { aggregate(&decisions) })
}
