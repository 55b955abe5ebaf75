//! Span infilling: masked queries, ranked candidates and the backends that
//! produce them.
//!
//! Two backends implement [`Infiller`]: an in-process n-gram model decoded
//! with beam search ([`BeamInfiller`]) and an HTTP client for an external
//! model ([`RemoteInfiller`]).
//!
//! The n-gram backend ignores `MaskedQuery::context`. An n-gram model has no
//! way to condition on a document, so only the masked sentence itself drives
//! its candidates. The context is still carried on every query and sent to
//! remote backends.

mod beam;
mod ngram;
mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, Sentence};
use crate::extract::{extract_triple, Role, TripleSpan, VerbLexicon};
use crate::http::HttpError;

pub use beam::{beam_infill, BeamInfiller, BeamParams};
pub use ngram::{train_ngram, train_on_sentences, ModelError, NGramInfillModel, BOS, EOS};
pub use remote::{RemoteInfiller, DEFAULT_CONTEXT_LIMIT};

pub const MASK: &str = "<mask>";

/// A sentence with one phrase replaced by [`MASK`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedQuery {
    pub doc_id: String,
    pub sentence_index: usize,
    pub masked_text: Vec<String>,
    pub gold_span: Vec<String>,
    pub role: Role,
    pub context: Vec<String>,
}

impl MaskedQuery {
    pub fn from_span(
        doc_id: &str,
        sentence: &Sentence,
        span: &TripleSpan,
        context: Vec<String>,
    ) -> Self {
        let tokens = &sentence.tokens;
        let mut masked_text = Vec::with_capacity(tokens.len() - (span.end - span.start) + 1);
        masked_text.extend_from_slice(&tokens[..span.start]);
        masked_text.push(MASK.to_string());
        masked_text.extend_from_slice(&tokens[span.end..]);
        MaskedQuery {
            doc_id: doc_id.to_string(),
            sentence_index: sentence.index,
            masked_text,
            gold_span: tokens[span.start..span.end].to_vec(),
            role: span.role,
            context,
        }
    }

    pub fn mask_position(&self) -> usize {
        self.masked_text
            .iter()
            .position(|t| t == MASK)
            .expect("masked query without a mask token")
    }

    /// Substitutes `span` for the mask.
    pub fn fill(&self, span: &[String]) -> Vec<String> {
        let pos = self.mask_position();
        let mut out = Vec::with_capacity(self.masked_text.len() + span.len());
        out.extend_from_slice(&self.masked_text[..pos]);
        out.extend_from_slice(span);
        out.extend_from_slice(&self.masked_text[pos + 1..]);
        out
    }

    /// The sentence the query was cut from.
    pub fn original(&self) -> Vec<String> {
        self.fill(&self.gold_span)
    }
}

/// One ranked infill proposal. Ranks are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfillCandidate {
    pub tokens: Vec<String>,
    pub rank: usize,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum InfillError {
    #[error("infill backend unavailable: {0}")]
    Transport(#[from] HttpError),
    #[error("infill protocol violation: {0}")]
    Protocol(String),
}

pub trait Infiller: Send + Sync {
    /// Up to `beam_size` candidates, rank 1 first.
    fn infill(
        &self,
        query: &MaskedQuery,
        beam_size: usize,
    ) -> Result<Vec<InfillCandidate>, InfillError>;

    fn describe(&self) -> String;
}

/// Masked queries for one sentence: one per triple role, or none.
pub fn mask_sentence(
    doc_id: &str,
    sentence: &Sentence,
    lexicon: &VerbLexicon,
    context: impl Fn() -> Vec<String>,
) -> Vec<MaskedQuery> {
    let Some(triple) = extract_triple(sentence, lexicon) else {
        return Vec::new();
    };
    let ctx = context();
    triple
        .spans()
        .into_iter()
        .map(|span| MaskedQuery::from_span(doc_id, sentence, span, ctx.clone()))
        .collect()
}

/// Infiller training queries from the first `k` sentences of a document. The
/// context of each query is the document without the masked sentence.
pub fn build_infill_training(
    document: &Document,
    lexicon: &VerbLexicon,
    k: usize,
) -> Vec<MaskedQuery> {
    document
        .sentences
        .iter()
        .take(k)
        .flat_map(|s| {
            mask_sentence(&document.id, s, lexicon, || {
                document.tokens_without(s.index)
            })
        })
        .collect()
}

/// Source/target pair for training an external infiller:
/// `masked sentence [SEP] context` → gold span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfillTrainingRecord {
    pub doc_id: String,
    pub sentence_index: usize,
    pub role: Role,
    pub input: String,
    pub target: String,
}

impl InfillTrainingRecord {
    pub fn from_query(q: &MaskedQuery) -> Self {
        InfillTrainingRecord {
            doc_id: q.doc_id.clone(),
            sentence_index: q.sentence_index,
            role: q.role,
            input: format!(
                "{} {} {}",
                q.masked_text.join(" "),
                crate::correct::SEP,
                q.context.join(" ")
            ),
            target: q.gold_span.join(" "),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> VerbLexicon {
        [
            "founded", "hired", "opened", "ran", "sold", "built", "bought", "moved",
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn seven_sentence_document_yields_fifteen_queries() {
        let raw = (0..7)
            .map(|i| format!("Person{i} founded company{i} in 1990."))
            .collect::<Vec<_>>()
            .join(" ");
        let doc = Document::from_raw("d", raw);
        assert_eq!(doc.sentences.len(), 7);
        assert_eq!(build_infill_training(&doc, &lexicon(), 5).len(), 15);
    }

    #[test]
    fn verbless_lead_contributes_nothing() {
        let doc = Document::from_raw(
            "d",
            "Sunny day. Quiet town. Calm sea. Blue sky. Long road. John founded Acme.",
        );
        assert!(build_infill_training(&doc, &lexicon(), 5).is_empty());
    }

    #[test]
    fn single_sentence_object_query() {
        let doc = Document::from_raw("d", "John founded Acme.");
        let qs = build_infill_training(&doc, &lexicon(), 5);
        assert_eq!(qs.len(), 3);
        let obj = qs.iter().find(|q| q.role == Role::Object).unwrap();
        assert_eq!(obj.masked_text, ["john", "founded", MASK, "."]);
        assert_eq!(obj.gold_span, ["acme"]);
        assert!(obj.context.is_empty());
    }

    #[test]
    fn context_excludes_masked_sentence_and_queries_round_trip() {
        let doc = Document::from_raw(
            "d",
            "Ann opened a bakery in May. Bob hired two cooks. Ann sold bread daily.",
        );
        let qs = build_infill_training(&doc, &lexicon(), 5);
        assert_eq!(qs.len(), 9);
        for q in &qs {
            assert_eq!(q.original(), doc.sentences[q.sentence_index].tokens);
            assert_eq!(q.masked_text.iter().filter(|t| *t == MASK).count(), 1);
            assert_eq!(q.context, doc.tokens_without(q.sentence_index));
        }
        let rec = InfillTrainingRecord::from_query(&qs[0]);
        assert!(rec
            .input
            .starts_with("<mask> opened a bakery in may . [SEP] bob hired"));
        assert_eq!(rec.target, "ann");
    }
}
