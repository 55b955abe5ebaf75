//! Adversarial fact-correction data: reference summaries corrupted with
//! lower-ranked infill candidates, mixed with untouched positives.
//!
//! All randomness is derived from `(seed, doc_id)`, so output does not depend
//! on worker count or corpus order. Output is kept in a canonical order: by
//! document id, then sentence, then role, with a sentence's positive last.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::corpus::{Document, SummaryUnit};
use crate::correct::{format_input, AblationFlags, CorrectionRecord, FormatError};
use crate::extract::{Role, VerbLexicon};
use crate::infill::{mask_sentence, InfillCandidate, InfillError, Infiller, MaskedQuery};
use crate::passage::select_passages;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub rank_lo: usize,
    pub rank_hi: usize,
    pub beam_size: usize,
    pub positive_ratio: f64,
    pub seed: u64,
    pub candidates_per_mask: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            rank_lo: 5,
            rank_hi: 15,
            beam_size: 16,
            positive_ratio: 0.20,
            seed: 0,
            candidates_per_mask: 1,
        }
    }
}

impl GenConfig {
    /// Field-level constraint violations, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.rank_lo < 1 {
            out.push("rank_lo: must be at least 1".to_string());
        }
        if self.rank_lo > self.rank_hi {
            out.push(format!(
                "rank_lo: {} exceeds rank_hi {}",
                self.rank_lo, self.rank_hi
            ));
        }
        if self.rank_hi > self.beam_size {
            out.push(format!(
                "rank_hi: {} exceeds beam_size {}",
                self.rank_hi, self.beam_size
            ));
        }
        if !(0.0..=1.0).contains(&self.positive_ratio) {
            out.push(format!(
                "positive_ratio: {} is outside [0, 1]",
                self.positive_ratio
            ));
        }
        if self.candidates_per_mask < 1 {
            out.push("candidates_per_mask: must be at least 1".to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "neg")]
    Negative,
    #[serde(rename = "pos")]
    Positive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionMeta {
    pub role: Role,
    pub candidate_rank: usize,
    pub candidate_score: f64,
    /// Token offset of the replaced span in both sentences.
    pub span_start: usize,
    pub gold_span: Vec<String>,
    pub replacement: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialExample {
    pub id: String,
    pub doc_id: String,
    pub sentence_index: usize,
    pub corrupted_sentence: Vec<String>,
    pub original_sentence: Vec<String>,
    /// Summary sentences with the corruption applied.
    pub corrupted_summary: Vec<Vec<String>>,
    pub original_summary: Vec<Vec<String>>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<CorruptionMeta>,
}

impl AdversarialExample {
    fn sort_key(&self) -> (&str, usize, u8, usize) {
        let (kind, rank) = match &self.meta {
            Some(m) => (m.role as u8, m.candidate_rank),
            None => (3, 0),
        };
        (&self.doc_id, self.sentence_index, kind, rank)
    }

    pub fn corrupted_summary_tokens(&self) -> Vec<String> {
        self.corrupted_summary.iter().flatten().cloned().collect()
    }
}

fn canonical(a: &AdversarialExample, b: &AdversarialExample) -> Ordering {
    a.sort_key().cmp(&b.sort_key())
}

/// Deterministic per-document generator.
pub fn doc_rng(seed: u64, doc_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(xxh3_64_with_seed(doc_id.as_bytes(), seed))
}

/// Masked queries for every reference sentence that has a triple. The whole
/// document is the context.
pub fn mask_reference(
    reference: &SummaryUnit,
    document: &Document,
    lexicon: &VerbLexicon,
) -> Vec<MaskedQuery> {
    let context = document.tokens();
    reference
        .sentences
        .iter()
        .flat_map(|s| mask_sentence(&reference.doc_id, s, lexicon, || context.clone()))
        .collect()
}

/// Turns infill candidates for one mask into negatives.
///
/// Only ranks inside `[rank_lo, rank_hi]` that differ from the gold span (and
/// are non-empty) survive; `candidates_per_mask` of them are drawn uniformly
/// without replacement. An empty result means the mask is skipped.
pub fn corrupt(
    query: &MaskedQuery,
    candidates: &[InfillCandidate],
    reference: &SummaryUnit,
    cfg: &GenConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<AdversarialExample> {
    let survivors: Vec<&InfillCandidate> = candidates
        .iter()
        .filter(|c| (cfg.rank_lo..=cfg.rank_hi).contains(&c.rank))
        .filter(|c| !c.tokens.is_empty() && c.tokens != query.gold_span)
        .collect();
    let mut picked: Vec<&InfillCandidate> = survivors
        .choose_multiple(rng, cfg.candidates_per_mask)
        .copied()
        .collect();
    picked.sort_by_key(|c| c.rank);

    let span_start = query.mask_position();
    let original_summary = reference.sentence_tokens();
    picked
        .into_iter()
        .map(|c| {
            let corrupted_sentence = query.fill(&c.tokens);
            let mut corrupted_summary = original_summary.clone();
            corrupted_summary[query.sentence_index] = corrupted_sentence.clone();
            AdversarialExample {
                id: format!(
                    "{}#{}.{}.{}",
                    query.doc_id, query.sentence_index, query.role, c.rank
                ),
                doc_id: query.doc_id.clone(),
                sentence_index: query.sentence_index,
                corrupted_sentence,
                original_sentence: query.original(),
                corrupted_summary,
                original_summary: original_summary.clone(),
                label: Label::Negative,
                meta: Some(CorruptionMeta {
                    role: query.role,
                    candidate_rank: c.rank,
                    candidate_score: c.score,
                    span_start,
                    gold_span: query.gold_span.clone(),
                    replacement: c.tokens.clone(),
                }),
            }
        })
        .collect()
}

/// The no-op example for one reference sentence.
pub fn positive(reference: &SummaryUnit, sentence_index: usize) -> AdversarialExample {
    let summary = reference.sentence_tokens();
    AdversarialExample {
        id: format!("{}#{}.pos", reference.doc_id, sentence_index),
        doc_id: reference.doc_id.clone(),
        sentence_index,
        corrupted_sentence: summary[sentence_index].clone(),
        original_sentence: summary[sentence_index].clone(),
        corrupted_summary: summary.clone(),
        original_summary: summary,
        label: Label::Positive,
        meta: None,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenStats {
    pub documents: usize,
    pub masks: usize,
    pub negatives: usize,
    pub positives: usize,
    /// Masks whose rank window held no usable candidate.
    pub skipped_masks: usize,
    /// Masks whose infill call failed.
    pub failed_masks: usize,
}

impl GenStats {
    pub fn positive_fraction(&self) -> f64 {
        let total = self.negatives + self.positives;
        if total == 0 {
            0.0
        } else {
            self.positives as f64 / total as f64
        }
    }
}

#[derive(Debug, Default)]
struct DocOutcome {
    negatives: Vec<AdversarialExample>,
    masks: usize,
    skipped: usize,
    failed: usize,
}

fn corrupt_document(
    document: &Document,
    reference: &SummaryUnit,
    infiller: &dyn Infiller,
    lexicon: &VerbLexicon,
    cfg: &GenConfig,
) -> DocOutcome {
    let mut rng = doc_rng(cfg.seed, &document.id);
    let mut out = DocOutcome::default();
    for query in mask_reference(reference, document, lexicon) {
        out.masks += 1;
        let candidates = match infiller.infill(&query, cfg.beam_size) {
            Ok(c) => c,
            Err(e) => {
                log::warn!(
                    "{}#{} {}: infill failed: {e}",
                    query.doc_id,
                    query.sentence_index,
                    query.role
                );
                out.failed += 1;
                continue;
            }
        };
        let made = corrupt(&query, &candidates, reference, cfg, &mut rng);
        if made.is_empty() {
            out.skipped += 1;
        }
        out.negatives.extend(made);
    }
    out
}

/// Mixes positives into a set of negatives so that they form
/// `positive_ratio` of the output.
///
/// Every reference sentence is a positive slot. Slots are ranked by a hash of
/// `(seed, doc_id, sentence_index)` and the lowest-ranked ones are taken, so
/// the choice is independent of input order. With no negatives, no positives
/// are emitted.
pub fn assemble_dataset(
    negatives: Vec<AdversarialExample>,
    references: &[&SummaryUnit],
    cfg: &GenConfig,
) -> (Vec<AdversarialExample>, GenStats) {
    let n_neg = negatives.len();
    let mut slots: Vec<(u64, &str, usize)> = references
        .iter()
        .flat_map(|r| {
            (0..r.sentences.len()).map(move |i| {
                let mut key = r.doc_id.as_bytes().to_vec();
                key.push(0);
                key.extend_from_slice(&(i as u64).to_le_bytes());
                (xxh3_64_with_seed(&key, cfg.seed), r.doc_id.as_str(), i)
            })
        })
        .collect();
    let wanted = if n_neg == 0 || cfg.positive_ratio <= 0.0 {
        0
    } else if cfg.positive_ratio >= 1.0 {
        slots.len()
    } else {
        let r = cfg.positive_ratio;
        ((n_neg as f64 * r / (1.0 - r)).round() as usize).min(slots.len())
    };
    slots.sort_unstable();
    slots.truncate(wanted);

    let by_id: HashMap<&str, &SummaryUnit> =
        references.iter().map(|r| (r.doc_id.as_str(), *r)).collect();
    let mut out = negatives;
    for (_, doc_id, i) in slots {
        out.push(positive(by_id[doc_id], i));
    }
    out.sort_by(canonical);

    let stats = GenStats {
        documents: references.len(),
        negatives: n_neg,
        positives: wanted,
        ..GenStats::default()
    };
    (out, stats)
}

/// Corrupts every reference and assembles the mixed dataset. Documents are
/// processed in parallel on the current rayon pool.
pub fn generate(
    pairs: &[(Document, SummaryUnit)],
    infiller: &dyn Infiller,
    lexicon: &VerbLexicon,
    cfg: &GenConfig,
) -> Result<(Vec<AdversarialExample>, GenStats), InfillError> {
    let outcomes: Vec<DocOutcome> = pairs
        .par_iter()
        .map(|(doc, reference)| corrupt_document(doc, reference, infiller, lexicon, cfg))
        .collect();

    let mut negatives = Vec::new();
    let (mut masks, mut skipped, mut failed) = (0, 0, 0);
    for o in outcomes {
        masks += o.masks;
        skipped += o.skipped;
        failed += o.failed;
        negatives.extend(o.negatives);
    }
    if masks > 0 && failed == masks {
        return Err(InfillError::Protocol(format!(
            "all {masks} infill requests failed via {}",
            infiller.describe()
        )));
    }
    let references: Vec<&SummaryUnit> = pairs.iter().map(|(_, r)| r).collect();
    let (dataset, mut stats) = assemble_dataset(negatives, &references, cfg);
    stats.masks = masks;
    stats.skipped_masks = skipped;
    stats.failed_masks = failed;
    Ok((dataset, stats))
}

/// Serializes an example as a corrector training pair: input
/// `s' [SEP] r' [SEP] passages` (passages retrieved for `s'`), target `s`.
pub fn serialize_training(
    example: &AdversarialExample,
    document: &Document,
    flags: AblationFlags,
    top_k: usize,
    window: usize,
    max_in: usize,
    max_out: usize,
) -> Result<CorrectionRecord, FormatError> {
    let sentence = &example.corrupted_sentence;
    if sentence.len() > max_in {
        return Err(FormatError::SentenceTooLong {
            len: sentence.len(),
            max: max_in,
        });
    }
    let passages = select_passages(sentence, document, top_k, window);
    let mut record = format_input(
        sentence,
        &example.corrupted_summary_tokens(),
        &passages,
        document,
        flags,
        max_in,
    )?;
    let target = &example.original_sentence;
    record.target = Some(target[..target.len().min(max_out)].join(" "));
    Ok(record)
}

/// One line of the training dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLine {
    pub input: String,
    pub target: String,
    pub label: Label,
    pub doc_id: String,
    pub meta: serde_json::Value,
}

impl DatasetLine {
    pub fn new(example: &AdversarialExample, record: CorrectionRecord) -> Self {
        let meta = match &example.meta {
            Some(m) => json!({
                "id": example.id,
                "sentence_index": example.sentence_index,
                "role": m.role,
                "candidate_rank": m.candidate_rank,
                "candidate_score": m.candidate_score,
            }),
            None => json!({
                "id": example.id,
                "sentence_index": example.sentence_index,
            }),
        };
        DatasetLine {
            input: record.input,
            target: record.target.unwrap_or_default(),
            label: example.label,
            doc_id: example.doc_id.clone(),
            meta,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SummaryKind;

    fn lexicon() -> VerbLexicon {
        ["founded", "hired", "sold", "opened"].into_iter().collect()
    }

    fn candidates(n: usize) -> Vec<InfillCandidate> {
        (1..=n)
            .map(|rank| InfillCandidate {
                tokens: vec![format!("c{rank}")],
                rank,
                score: -(rank as f64),
            })
            .collect()
    }

    fn reference() -> SummaryUnit {
        SummaryUnit::from_raw(
            "d1",
            SummaryKind::Reference,
            "John founded Acme. Acme hired Ann. Ann sold shares.",
        )
    }

    fn object_query() -> MaskedQuery {
        let doc = Document::from_raw("d1", "John founded Acme in 1990.");
        mask_reference(&reference(), &doc, &lexicon())
            .into_iter()
            .find(|q| q.role == Role::Object && q.sentence_index == 0)
            .unwrap()
    }

    #[test]
    fn reference_masking_counts() {
        let doc = Document::from_raw("d1", "John founded Acme in 1990.");
        let qs = mask_reference(&reference(), &doc, &lexicon());
        assert_eq!(qs.len(), 9);
        assert!(qs.iter().all(|q| q.context == doc.tokens()));
        let single = SummaryUnit::from_raw("d1", SummaryKind::Reference, "John founded Acme.");
        let qs = mask_reference(&single, &doc, &lexicon());
        assert_eq!(qs.len(), 3);
        assert_eq!(qs[2].gold_span, ["acme"]);
    }

    #[test]
    fn window_sampling() {
        let q = object_query();
        let cfg = GenConfig {
            seed: 11,
            ..GenConfig::default()
        };
        let mut rng = doc_rng(cfg.seed, "d1");
        let out = corrupt(&q, &candidates(16), &reference(), &cfg, &mut rng);
        assert_eq!(out.len(), 1);
        let ex = &out[0];
        let meta = ex.meta.as_ref().unwrap();
        assert!((5..=15).contains(&meta.candidate_rank));
        assert_ne!(ex.corrupted_sentence, ex.original_sentence);
        assert_eq!(ex.corrupted_summary[0], ex.corrupted_sentence);
        assert_eq!(ex.corrupted_summary[1..], ex.original_summary[1..]);

        // Same seed, same draw.
        let mut rng = doc_rng(cfg.seed, "d1");
        assert_eq!(
            corrupt(&q, &candidates(16), &reference(), &cfg, &mut rng),
            out
        );
    }

    #[test]
    fn empty_window_and_gold_only_window() {
        let q = object_query();
        let cfg = GenConfig::default();
        let mut rng = doc_rng(0, "d1");
        assert!(corrupt(&q, &candidates(4), &reference(), &cfg, &mut rng).is_empty());
        let gold: Vec<InfillCandidate> = (1..=16)
            .map(|rank| InfillCandidate {
                tokens: if (5..=15).contains(&rank) {
                    q.gold_span.clone()
                } else {
                    vec!["z".into()]
                },
                rank,
                score: -(rank as f64),
            })
            .collect();
        assert!(corrupt(&q, &gold, &reference(), &cfg, &mut rng).is_empty());
    }

    #[test]
    fn several_candidates_per_mask() {
        let q = object_query();
        let cfg = GenConfig {
            candidates_per_mask: 20,
            ..GenConfig::default()
        };
        let mut rng = doc_rng(0, "d1");
        let out = corrupt(&q, &candidates(16), &reference(), &cfg, &mut rng);
        let ranks: Vec<usize> = out
            .iter()
            .map(|e| e.meta.as_ref().unwrap().candidate_rank)
            .collect();
        assert_eq!(ranks, (5..=15).collect::<Vec<_>>());
    }

    #[test]
    fn no_negatives_no_positives() {
        let r = reference();
        let (out, stats) = assemble_dataset(Vec::new(), &[&r], &GenConfig::default());
        assert!(out.is_empty());
        assert_eq!((stats.negatives, stats.positives), (0, 0));
    }

    #[test]
    fn positives_fill_the_ratio() {
        let refs: Vec<SummaryUnit> = (0..50)
            .map(|i| {
                SummaryUnit::from_raw(
                    format!("d{i:02}"),
                    SummaryKind::Reference,
                    "John founded Acme. Acme hired Ann.",
                )
            })
            .collect();
        let q = object_query();
        let cfg = GenConfig::default();
        let mut negatives = Vec::new();
        for r in &refs {
            let mut rng = doc_rng(0, &r.doc_id);
            for mut ex in corrupt(&q, &candidates(16), r, &cfg, &mut rng) {
                ex.doc_id = r.doc_id.clone();
                negatives.push(ex);
            }
        }
        let refs_ref: Vec<&SummaryUnit> = refs.iter().collect();
        let (out, stats) = assemble_dataset(negatives.clone(), &refs_ref, &cfg);
        assert_eq!(stats.negatives, 50);
        assert_eq!(stats.positives, 13); // round(50 * 0.25)
        assert_eq!(out.len(), 63);
        assert!(out
            .iter()
            .filter(|e| e.label == Label::Positive)
            .all(|e| e.corrupted_summary == e.original_summary));

        // Reversed inputs give the same canonical output.
        let mut rev = refs_ref.clone();
        rev.reverse();
        let mut neg_rev = negatives;
        neg_rev.reverse();
        assert_eq!(assemble_dataset(neg_rev, &rev, &cfg).0, out);
    }

    #[test]
    fn training_serialization() {
        let doc = Document::from_raw("d1", "John founded Acme in 1990. Acme hired Ann.");
        let r = reference();
        let pos = positive(&r, 0);
        let rec = serialize_training(&pos, &doc, AblationFlags::default(), 3, 2, 512, 128).unwrap();
        let first = crate::correct::split_segments(&rec.input)[0].clone();
        assert_eq!(rec.target.as_deref(), Some(first.as_str()));

        let mut long = pos.clone();
        long.corrupted_sentence = (0..600).map(|i| format!("w{i}")).collect();
        long.original_sentence = long.corrupted_sentence.clone();
        assert!(matches!(
            serialize_training(&long, &doc, AblationFlags::default(), 3, 2, 512, 128),
            Err(FormatError::SentenceTooLong { len: 600, max: 512 })
        ));
        let rec =
            serialize_training(&long, &doc, AblationFlags::default(), 3, 2, 610, 128).unwrap();
        assert!(rec.truncated);
        assert_eq!(rec.input.split_whitespace().count(), 610);
        assert_eq!(rec.target.unwrap().split_whitespace().count(), 128);
    }

    #[test]
    fn config_problems() {
        assert!(GenConfig::default().problems().is_empty());
        let bad = GenConfig {
            rank_lo: 9,
            rank_hi: 3,
            beam_size: 2,
            positive_ratio: 1.5,
            candidates_per_mask: 0,
            ..GenConfig::default()
        };
        assert_eq!(bad.problems().len(), 4);
    }
}
