//! Sentence-level fact correction.
//!
//! Each summary sentence is corrected on its own, with the full (uncorrected)
//! summary and the retrieved supporting passages as context. The model input
//! is the flat string `sentence [SEP] summary [SEP] passages`; segments can be
//! switched off through [`AblationFlags`].

mod baseline;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{join_raw, Document, Sentence, SummaryKind, SummaryUnit};
use crate::http::HttpError;
use crate::passage::{select_passages, PassageSet};

pub use baseline::{BaselineCorrector, DEFAULT_DELTA};
pub use remote::{FactualityClassifier, RemoteClassifier, RemoteCorrector, Verdict};

pub const SEP: &str = "[SEP]";
pub const DEFAULT_MAX_INPUT: usize = 512;
pub const DEFAULT_MAX_OUTPUT: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub use_summary_context: bool,
    pub use_relevant_passages: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            use_summary_context: true,
            use_relevant_passages: true,
        }
    }
}

/// Structural view of a formatted input, kept next to the flat string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segments {
    pub sentence: Vec<String>,
    pub summary_context: Option<Vec<String>>,
    /// Context sentences (retrieved passages, or the whole document).
    pub passages: Vec<Vec<String>>,
}

impl Segments {
    pub fn passage_tokens(&self) -> impl Iterator<Item = &String> {
        self.passages.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub input: String,
    pub target: Option<String>,
    pub segments: Segments,
    /// Whether `input` lost tokens to the length limit.
    pub truncated: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("cannot correct an empty sentence")]
    EmptySentence,
    #[error("sentence alone has {len} tokens, over the {max} token input limit")]
    SentenceTooLong { len: usize, max: usize },
}

fn truncate_tokens(text: &str, max: usize) -> (String, bool) {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= max {
        (tokens.join(" "), false)
    } else {
        (tokens[..max].join(" "), true)
    }
}

/// Builds the corrector input for one sentence.
///
/// With `use_relevant_passages` off, every document sentence stands in for
/// the retrieved passages. A disabled summary context is dropped together with
/// its separator. The flat input keeps at most `max_in` whitespace tokens.
pub fn format_input(
    sentence: &[String],
    summary: &[String],
    passages: &PassageSet,
    document: &Document,
    flags: AblationFlags,
    max_in: usize,
) -> Result<CorrectionRecord, FormatError> {
    if sentence.is_empty() {
        return Err(FormatError::EmptySentence);
    }
    let context: Vec<Vec<String>> = if flags.use_relevant_passages {
        passages
            .sentences(document)
            .into_iter()
            .map(<[String]>::to_vec)
            .collect()
    } else {
        document
            .sentences
            .iter()
            .map(|s| s.tokens.clone())
            .collect()
    };
    let segments = Segments {
        sentence: sentence.to_vec(),
        summary_context: flags.use_summary_context.then(|| summary.to_vec()),
        passages: context,
    };

    let mut parts = vec![segments.sentence.join(" ")];
    if let Some(ctx) = &segments.summary_context {
        parts.push(ctx.join(" "));
    }
    parts.push(
        segments
            .passage_tokens()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" "),
    );
    let (input, truncated) = truncate_tokens(&parts.join(&format!(" {SEP} ")), max_in);
    Ok(CorrectionRecord {
        input,
        target: None,
        segments,
        truncated,
    })
}

/// Splits a flat input back into its `[SEP]`-separated segments.
pub fn split_segments(input: &str) -> Vec<String> {
    input
        .split(SEP)
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .collect()
}

#[derive(Debug, Error)]
pub enum CorrectError {
    #[error("corrector backend unavailable: {0}")]
    Transport(#[from] HttpError),
    #[error("corrector failed: {0}")]
    Failed(String),
}

pub trait Corrector: Send + Sync {
    fn name(&self) -> String;

    /// Corrected tokens for the record's sentence.
    fn correct(
        &self,
        record: &CorrectionRecord,
        document: &Document,
    ) -> Result<Vec<String>, CorrectError>;
}

/// Returns every sentence unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCorrector;

impl Corrector for IdentityCorrector {
    fn name(&self) -> String {
        "identity".to_string()
    }

    fn correct(
        &self,
        record: &CorrectionRecord,
        _: &Document,
    ) -> Result<Vec<String>, CorrectError> {
        Ok(record.segments.sentence.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorrectionParams {
    pub flags: AblationFlags,
    pub top_k: usize,
    pub window: usize,
    pub max_in: usize,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        CorrectionParams {
            flags: AblationFlags::default(),
            top_k: crate::passage::DEFAULT_TOP_K,
            window: crate::passage::DEFAULT_WINDOW,
            max_in: DEFAULT_MAX_INPUT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceEdit {
    pub index: usize,
    pub original: Vec<String>,
    pub corrected: Vec<String>,
    pub changed: bool,
    pub corrector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionResult {
    /// Item id: the document id for corpus summaries, the example id for
    /// synthetic corruptions.
    pub id: String,
    pub doc_id: String,
    pub corrected: SummaryUnit,
    pub per_sentence: Vec<SentenceEdit>,
    pub filtered_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_score: Option<f64>,
}

impl CorrectionResult {
    pub fn any_changed(&self) -> bool {
        self.per_sentence.iter().any(|e| e.changed)
    }

    pub fn failures(&self) -> usize {
        self.per_sentence
            .iter()
            .filter(|e| e.failure.is_some())
            .count()
    }
}

/// Corrects a summary sentence by sentence.
///
/// If a classifier is given and judges the summary factual, the summary is
/// returned untouched with `filtered_out` set. A classifier error falls
/// through to correction. Every sentence sees the original full summary as
/// context, not the partially corrected one. A backend failure keeps the
/// original sentence and records the error.
pub fn correct_summary(
    id: &str,
    summary: &SummaryUnit,
    document: &Document,
    corrector: &dyn Corrector,
    filter: Option<&dyn FactualityClassifier>,
    params: CorrectionParams,
) -> CorrectionResult {
    let mut filter_score = None;
    if let Some(classifier) = filter {
        match classifier.classify(&summary.raw, &document.raw) {
            Ok(v) if v.factual => {
                return CorrectionResult {
                    id: id.to_string(),
                    doc_id: summary.doc_id.clone(),
                    corrected: SummaryUnit {
                        kind: SummaryKind::Corrected,
                        ..summary.clone()
                    },
                    per_sentence: Vec::new(),
                    filtered_out: true,
                    filter_score: Some(v.score),
                };
            }
            Ok(v) => filter_score = Some(v.score),
            Err(e) => log::warn!("{id}: classifier failed, correcting anyway: {e}"),
        }
    }

    let summary_tokens = summary.tokens();
    let name = corrector.name();
    let mut edits = Vec::with_capacity(summary.sentences.len());
    for sentence in &summary.sentences {
        let passages = select_passages(&sentence.tokens, document, params.top_k, params.window);
        let outcome = format_input(
            &sentence.tokens,
            &summary_tokens,
            &passages,
            document,
            params.flags,
            params.max_in,
        )
        .map_err(|e| CorrectError::Failed(e.to_string()))
        .and_then(|record| corrector.correct(&record, document));
        let (corrected, failure) = match outcome {
            Ok(tokens) => (tokens, None),
            Err(e) => {
                log::warn!("{id}: sentence {} kept: {e}", sentence.index);
                (sentence.tokens.clone(), Some(e.to_string()))
            }
        };
        edits.push(SentenceEdit {
            index: sentence.index,
            changed: corrected != sentence.tokens,
            original: sentence.tokens.clone(),
            corrected,
            corrector: name.clone(),
            failure,
        });
    }

    let corrected = reassemble(summary, &edits);
    CorrectionResult {
        id: id.to_string(),
        doc_id: summary.doc_id.clone(),
        corrected,
        per_sentence: edits,
        filtered_out: false,
        filter_score,
    }
}

/// Rebuilds the summary from per-sentence edits. Unchanged sentences keep
/// their raw text; an empty correction drops its sentence.
fn reassemble(summary: &SummaryUnit, edits: &[SentenceEdit]) -> SummaryUnit {
    if !edits.iter().any(|e| e.changed) {
        return SummaryUnit {
            kind: SummaryKind::Corrected,
            ..summary.clone()
        };
    }
    let sentences: Vec<Sentence> = summary
        .sentences
        .iter()
        .zip(edits)
        .filter(|(_, e)| !e.corrected.is_empty())
        .enumerate()
        .map(|(index, (s, e))| Sentence {
            index,
            raw: if e.changed {
                e.corrected.join(" ")
            } else {
                s.raw.clone()
            },
            tokens: e.corrected.clone(),
        })
        .collect();
    SummaryUnit {
        doc_id: summary.doc_id.clone(),
        kind: SummaryKind::Corrected,
        raw: join_raw(&sentences),
        sentences,
    }
}
