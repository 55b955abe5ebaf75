//! Pipeline configuration: built-in defaults, overlaid by a JSON file,
//! overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::advgen::GenConfig;
use crate::correct::AblationFlags;
use crate::http::remote_url;

pub const CONFIG_ENV: &str = "FACTFORGE_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Input corpus (JSONL with `id`, `document`, `summary`).
    pub corpus: Option<PathBuf>,
    /// Reference corpus for evaluating corrected corpus summaries.
    pub references: Option<PathBuf>,
    /// Verb lexicon; the bundled one when absent.
    pub lexicon: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub model: Option<PathBuf>,
    pub adversarial: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub corrected: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            references: None,
            lexicon: None,
            out_dir: PathBuf::from("factforge-out"),
            model: None,
            adversarial: None,
            dataset: None,
            corrected: None,
            reports: None,
        }
    }
}

impl Paths {
    fn under(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn model(&self) -> PathBuf {
        self.under(&self.model, "model.json")
    }

    pub fn adversarial(&self) -> PathBuf {
        self.under(&self.adversarial, "adversarial.jsonl")
    }

    pub fn dataset(&self) -> PathBuf {
        self.under(&self.dataset, "dataset.jsonl")
    }

    pub fn corrected(&self) -> PathBuf {
        self.under(&self.corrected, "corrected.jsonl")
    }

    pub fn reports(&self) -> PathBuf {
        self.under(&self.reports, "reports")
    }

    /// `path` relative to the output directory when it lies inside it.
    pub fn display_rel(&self, path: &Path) -> String {
        path.strip_prefix(&self.out_dir)
            .unwrap_or(path)
            .display()
            .to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfillSettings {
    /// `ngram` or `remote:<url>`.
    pub backend: String,
    pub order: usize,
    pub alpha: f64,
    pub max_span_len: usize,
    pub length_normalize: bool,
    /// Leading document sentences used for infiller training queries.
    pub k_first: usize,
    pub context_limit: usize,
}

impl Default for InfillSettings {
    fn default() -> Self {
        InfillSettings {
            backend: "ngram".to_string(),
            order: 3,
            alpha: 1.0,
            max_span_len: 4,
            length_normalize: false,
            k_first: 5,
            context_limit: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassageSettings {
    pub top_k: usize,
    pub window: usize,
}

impl Default for PassageSettings {
    fn default() -> Self {
        PassageSettings {
            top_k: 3,
            window: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionSource {
    /// Summaries of the input corpus.
    Corpus,
    /// Corrupted summaries from the adversarial set.
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectSettings {
    /// `baseline`, `identity` or `remote:<url>`.
    pub backend: String,
    /// `none` or `remote:<url>`.
    pub filter: String,
    pub source: CorrectionSource,
    pub delta: f64,
    pub max_in_flight: usize,
}

impl Default for CorrectSettings {
    fn default() -> Self {
        CorrectSettings {
            backend: "baseline".to_string(),
            filter: "none".to_string(),
            source: CorrectionSource::Corpus,
            delta: crate::correct::DEFAULT_DELTA,
            max_in_flight: crate::http::DEFAULT_IN_FLIGHT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub max_in: usize,
    pub max_out: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_in: crate::correct::DEFAULT_MAX_INPUT,
            max_out: crate::correct::DEFAULT_MAX_OUTPUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub gen: GenConfig,
    pub ablation: AblationFlags,
    pub infill: InfillSettings,
    pub passages: PassageSettings,
    pub correct: CorrectSettings,
    pub limits: Limits,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl PipelineConfig {
    /// Defaults overlaid with the JSON in `text`. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let overlay: Value =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if !overlay.is_object() {
            return Err(ConfigError::Parse(
                "top level must be a JSON object".to_string(),
            ));
        }
        let mut base = serde_json::to_value(PipelineConfig::default()).expect("defaults serialize");
        merge(&mut base, overlay);
        serde_json::from_value(base).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// Every out-of-bounds field, as `section.field: problem`.
    pub fn problems(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .gen
            .problems()
            .into_iter()
            .map(|p| format!("gen.{p}"))
            .collect();
        let i = &self.infill;
        if i.backend != "ngram" && remote_url(&i.backend).is_none() {
            out.push(format!(
                "infill.backend: expected \"ngram\" or \"remote:<url>\", got {:?}",
                i.backend
            ));
        }
        if i.order < 2 {
            out.push(format!("infill.order: must be at least 2, got {}", i.order));
        }
        if !(i.alpha > 0.0 && i.alpha.is_finite()) {
            out.push(format!("infill.alpha: must be positive, got {}", i.alpha));
        }
        if i.max_span_len < 1 {
            out.push("infill.max_span_len: must be at least 1".to_string());
        }
        if i.k_first < 1 {
            out.push("infill.k_first: must be at least 1".to_string());
        }
        if self.passages.top_k < 1 {
            out.push("passages.top_k: must be at least 1".to_string());
        }
        let c = &self.correct;
        if !matches!(c.backend.as_str(), "baseline" | "identity")
            && remote_url(&c.backend).is_none()
        {
            out.push(format!(
                "correct.backend: expected \"baseline\", \"identity\" or \"remote:<url>\", got {:?}",
                c.backend
            ));
        }
        if c.filter != "none" && remote_url(&c.filter).is_none() {
            out.push(format!(
                "correct.filter: expected \"none\" or \"remote:<url>\", got {:?}",
                c.filter
            ));
        }
        if !(c.delta >= 0.0 && c.delta.is_finite()) {
            out.push(format!(
                "correct.delta: must be non-negative, got {}",
                c.delta
            ));
        }
        if c.max_in_flight < 1 {
            out.push("correct.max_in_flight: must be at least 1".to_string());
        }
        if self.limits.max_in < 1 || self.limits.max_out < 1 {
            out.push("limits: max_in and max_out must be at least 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}
