use std::collections::BTreeSet;

use super::{CorrectError, CorrectionRecord, Corrector};
use crate::corpus::{Document, Sentence};
use crate::extract::{extract_triple, Role, VerbLexicon};
use crate::infill::{train_ngram, NGramInfillModel};

/// Minimum gain in average log-likelihood (nats per token) before the
/// baseline replaces a sentence.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Retrieval-substitution corrector.
///
/// Candidate sentences swap one triple span of the input for a same-role span
/// found in the context sentences. Candidates are scored by average per-token
/// log-likelihood under an n-gram model trained on the document alone; the
/// best one wins only if it beats the input by at least `delta`.
#[derive(Debug, Clone)]
pub struct BaselineCorrector {
    pub lexicon: VerbLexicon,
    pub order: usize,
    pub alpha: f64,
    pub delta: f64,
}

impl BaselineCorrector {
    pub fn new(lexicon: VerbLexicon) -> Self {
        BaselineCorrector {
            lexicon,
            order: 3,
            alpha: 1.0,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn document_model(&self, document: &Document) -> Result<NGramInfillModel, CorrectError> {
        train_ngram(std::iter::once(document), self.order, self.alpha)
            .map_err(|e| CorrectError::Failed(e.to_string()))
    }

    /// Best single-span substitution for `sentence`, or `sentence` itself.
    pub fn correct_with_model(
        &self,
        sentence: &[String],
        context: &[Vec<String>],
        lm: &NGramInfillModel,
    ) -> Vec<String> {
        let probe = Sentence {
            index: 0,
            tokens: sentence.to_vec(),
            raw: String::new(),
        };
        let Some(triple) = extract_triple(&probe, &self.lexicon) else {
            return sentence.to_vec();
        };

        let mut replacements: [BTreeSet<Vec<String>>; 3] = Default::default();
        for ctx in context {
            let s = Sentence {
                index: 0,
                tokens: ctx.clone(),
                raw: String::new(),
            };
            if let Some(t) = extract_triple(&s, &self.lexicon) {
                for (slot, role) in Role::ALL.into_iter().enumerate() {
                    replacements[slot].insert(t.span(role).tokens(ctx).to_vec());
                }
            }
        }

        let original_score = lm.avg_log_prob(sentence);
        let mut best: Option<(f64, Vec<String>)> = None;
        for (slot, role) in Role::ALL.into_iter().enumerate() {
            let span = triple.span(role);
            for replacement in &replacements[slot] {
                if replacement.as_slice() == span.tokens(sentence) {
                    continue;
                }
                let mut variant = Vec::with_capacity(sentence.len() + replacement.len());
                variant.extend_from_slice(&sentence[..span.start]);
                variant.extend_from_slice(replacement);
                variant.extend_from_slice(&sentence[span.end..]);
                let score = lm.avg_log_prob(&variant);
                let better = match &best {
                    None => true,
                    Some((s, v)) => score > *s || (score == *s && variant < *v),
                };
                if better {
                    best = Some((score, variant));
                }
            }
        }

        match best {
            Some((score, variant)) if score - original_score >= self.delta => variant,
            _ => sentence.to_vec(),
        }
    }
}

impl Corrector for BaselineCorrector {
    fn name(&self) -> String {
        "baseline".to_string()
    }

    fn correct(
        &self,
        record: &CorrectionRecord,
        document: &Document,
    ) -> Result<Vec<String>, CorrectError> {
        let lm = self.document_model(document)?;
        Ok(self.correct_with_model(&record.segments.sentence, &record.segments.passages, &lm))
    }
}
