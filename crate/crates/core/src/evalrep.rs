//! Evaluation: corpus-mean ROUGE against references, optional classifier
//! factuality, and restoration metrics for synthetic corruptions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advgen::{AdversarialExample, Label};
use crate::corpus::{Document, SummaryUnit};
use crate::correct::{CorrectionResult, FactualityClassifier};
use crate::passage::select_passages;
use crate::rouge::{rouge_l, rouge_n};

pub const REPORT_SCHEMA: u32 = 1;

pub const TSV_HEADER: &str = "id\tdoc_id\trouge1\trouge2\trougeL\tchanged\tfiltered_out\tfactual";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(
        "results and references are not aligned: {} result id(s) without reference {:?}, {} reference id(s) without result {:?}",
        .without_reference.len(), .without_reference, .without_result.len(), .without_result
    )]
    Alignment {
        without_reference: Vec<String>,
        without_result: Vec<String>,
    },
    #[error("{id}: result is for document {found:?} but the reference is for {expected:?}")]
    DocMismatch {
        id: String,
        expected: String,
        found: String,
    },
    #[error("document {0:?} is missing")]
    MissingDocument(String),
    #[error("classifier failed on {id}: {message}")]
    Classifier { id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub id: String,
    pub doc_id: String,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub changed: bool,
    pub filtered_out: bool,
    pub factual: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RestorationStats {
    pub negatives: usize,
    pub restored: usize,
    pub restoration_rate: f64,
    pub positives: usize,
    pub false_edits: usize,
    pub false_edit_rate: f64,
    /// Negatives whose original span occurs verbatim in the passages retrieved
    /// for the corrupted sentence.
    pub verbatim_negatives: usize,
    pub verbatim_restored: usize,
    pub verbatim_restoration_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: u32,
    /// Where factuality judgements came from ("none" without a classifier).
    pub classifier: String,
    pub n_summaries: usize,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub factual_fraction: Option<f64>,
    pub changed_fraction: f64,
    pub filtered_fraction: f64,
    pub restoration: Option<RestorationStats>,
    pub per_item: Vec<ItemRow>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Scores corrected summaries against references keyed by result id.
///
/// Every result needs a reference with the same id and document, and every
/// reference needs a result. Rows come back sorted by id.
pub fn evaluate(
    results: &[CorrectionResult],
    references: &BTreeMap<String, SummaryUnit>,
    documents: &HashMap<String, &Document>,
    classifier: Option<&dyn FactualityClassifier>,
) -> Result<EvalReport, EvalError> {
    let result_ids: BTreeSet<&str> = results.iter().map(|r| r.id.as_str()).collect();
    let without_reference: Vec<String> = result_ids
        .iter()
        .filter(|id| !references.contains_key(**id))
        .map(|id| id.to_string())
        .collect();
    let without_result: Vec<String> = references
        .keys()
        .filter(|id| !result_ids.contains(id.as_str()))
        .cloned()
        .collect();
    if !without_reference.is_empty() || !without_result.is_empty() || results.is_empty() {
        return Err(EvalError::Alignment {
            without_reference,
            without_result,
        });
    }

    let mut rows: Vec<ItemRow> = results
        .par_iter()
        .map(|r| {
            let reference = &references[&r.id];
            if reference.doc_id != r.doc_id {
                return Err(EvalError::DocMismatch {
                    id: r.id.clone(),
                    expected: reference.doc_id.clone(),
                    found: r.doc_id.clone(),
                });
            }
            let cand = r.corrected.tokens();
            let refr = reference.tokens();
            let factual = match classifier {
                Some(c) => {
                    let doc = documents
                        .get(&r.doc_id)
                        .ok_or_else(|| EvalError::MissingDocument(r.doc_id.clone()))?;
                    let verdict = c.classify(&r.corrected.raw, &doc.raw).map_err(|e| {
                        EvalError::Classifier {
                            id: r.id.clone(),
                            message: e.to_string(),
                        }
                    })?;
                    Some(verdict.factual)
                }
                None => None,
            };
            Ok(ItemRow {
                id: r.id.clone(),
                doc_id: r.doc_id.clone(),
                rouge1: rouge_n(&cand, &refr, 1).f1,
                rouge2: rouge_n(&cand, &refr, 2).f1,
                rouge_l: rouge_l(&cand, &refr).f1,
                changed: r.any_changed(),
                filtered_out: r.filtered_out,
                factual,
            })
        })
        .collect::<Result<_, _>>()?;
    rows.sort_by(|a, b| a.id.cmp(&b.id));

    let n = rows.len();
    Ok(EvalReport {
        schema: REPORT_SCHEMA,
        classifier: classifier.map_or_else(|| "none".to_string(), |c| c.describe()),
        n_summaries: n,
        rouge1: mean(rows.iter().map(|r| r.rouge1)),
        rouge2: mean(rows.iter().map(|r| r.rouge2)),
        rouge_l: mean(rows.iter().map(|r| r.rouge_l)),
        factual_fraction: classifier
            .map(|_| ratio(rows.iter().filter(|r| r.factual == Some(true)).count(), n)),
        changed_fraction: ratio(rows.iter().filter(|r| r.changed).count(), n),
        filtered_fraction: ratio(rows.iter().filter(|r| r.filtered_out).count(), n),
        restoration: None,
        per_item: rows,
    })
}

/// The sentence a result holds at `index` after correction.
fn corrected_sentence(result: &CorrectionResult, index: usize) -> Option<&[String]> {
    match result.per_sentence.iter().find(|e| e.index == index) {
        Some(edit) => Some(&edit.corrected),
        None => result
            .corrected
            .sentences
            .get(index)
            .map(|s| s.tokens.as_slice()),
    }
}

/// Whether the corrupted example's original span occurs as a contiguous token
/// run inside one of the passage sentences retrieved for its corrupted
/// sentence.
pub fn span_in_passages(
    example: &AdversarialExample,
    document: &Document,
    top_k: usize,
    window: usize,
) -> bool {
    let Some(meta) = &example.meta else {
        return false;
    };
    let gold = meta.gold_span.as_slice();
    let passages = select_passages(&example.corrupted_sentence, document, top_k, window);
    passages
        .sentences(document)
        .iter()
        .any(|s| s.windows(gold.len()).any(|w| w == gold))
}

/// Restoration and false-edit rates of corrections of synthetic examples,
/// aligned by example id. `verbatim` marks negatives counted in the verbatim
/// subset.
pub fn restoration_stats(
    results: &[CorrectionResult],
    adversarial: &[AdversarialExample],
    verbatim: impl Fn(&AdversarialExample) -> bool,
) -> Result<RestorationStats, EvalError> {
    let by_id: HashMap<&str, &CorrectionResult> =
        results.iter().map(|r| (r.id.as_str(), r)).collect();
    let example_ids: BTreeSet<&str> = adversarial.iter().map(|e| e.id.as_str()).collect();
    let without_result: Vec<String> = example_ids
        .iter()
        .filter(|id| !by_id.contains_key(**id))
        .map(|id| id.to_string())
        .collect();
    let without_reference: Vec<String> = by_id
        .keys()
        .filter(|id| !example_ids.contains(**id))
        .map(|id| id.to_string())
        .collect();
    if !without_result.is_empty() || !without_reference.is_empty() {
        return Err(EvalError::Alignment {
            without_reference,
            without_result,
        });
    }

    let mut s = RestorationStats::default();
    for ex in adversarial {
        let result = by_id[ex.id.as_str()];
        if result.doc_id != ex.doc_id {
            return Err(EvalError::DocMismatch {
                id: ex.id.clone(),
                expected: ex.doc_id.clone(),
                found: result.doc_id.clone(),
            });
        }
        let fixed = corrected_sentence(result, ex.sentence_index);
        let restored = fixed == Some(ex.original_sentence.as_slice());
        match ex.label {
            Label::Negative => {
                s.negatives += 1;
                s.restored += restored as usize;
                if verbatim(ex) {
                    s.verbatim_negatives += 1;
                    s.verbatim_restored += restored as usize;
                }
            }
            Label::Positive => {
                s.positives += 1;
                s.false_edits += result.any_changed() as usize;
            }
        }
    }
    s.restoration_rate = ratio(s.restored, s.negatives);
    s.false_edit_rate = ratio(s.false_edits, s.positives);
    s.verbatim_restoration_rate = ratio(s.verbatim_restored, s.verbatim_negatives);
    Ok(s)
}

/// Fraction of negatives whose corrected sentence equals the original.
pub fn restoration_rate(
    results: &[CorrectionResult],
    adversarial: &[AdversarialExample],
) -> Result<f64, EvalError> {
    Ok(restoration_stats(results, adversarial, |_| false)?.restoration_rate)
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for r in &self.per_item {
            let factual = match r.factual {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
                r.id,
                r.doc_id,
                r.rouge1,
                r.rouge2,
                r.rouge_l,
                r.changed as u8,
                r.filtered_out as u8,
                factual
            );
        }
        out
    }
}
