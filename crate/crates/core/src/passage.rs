//! Supporting-passage retrieval: the document sentences that best match a
//! summary sentence under ROUGE-L F1, widened by a window of neighbours.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::rouge::rouge_l;

pub const DEFAULT_TOP_K: usize = 3;
pub const DEFAULT_WINDOW: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageSet {
    pub doc_id: String,
    /// (sentence index, ROUGE-L F1), best first.
    pub selected: Vec<(usize, f64)>,
    pub window: usize,
    /// Sorted, deduplicated indices after window expansion.
    pub covered: Vec<usize>,
    /// Tokens of the covered sentences in document order.
    pub text: Vec<String>,
}

impl PassageSet {
    /// Token lists of the covered sentences, in document order.
    pub fn sentences<'a>(&self, document: &'a Document) -> Vec<&'a [String]> {
        self.covered
            .iter()
            .map(|&i| document.sentences[i].tokens.as_slice())
            .collect()
    }
}

/// Picks the `k` document sentences with the highest ROUGE-L F1 against
/// `summary_sentence` (ties go to the lower index) and covers each with
/// `window` sentences on either side.
pub fn select_passages<S: AsRef<str>>(
    summary_sentence: &[S],
    document: &Document,
    k: usize,
    window: usize,
) -> PassageSet {
    let mut scored: Vec<(usize, f64)> = document
        .sentences
        .iter()
        .map(|s| (s.index, rouge_l(summary_sentence, &s.tokens).f1))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);

    let n = document.sentences.len();
    let covered: BTreeSet<usize> = scored
        .iter()
        .flat_map(|&(i, _)| i.saturating_sub(window)..=(i + window).min(n.saturating_sub(1)))
        .collect();
    let covered: Vec<usize> = covered.into_iter().collect();
    let text = covered
        .iter()
        .flat_map(|&i| document.sentences[i].tokens.iter().cloned())
        .collect();

    PassageSet {
        doc_id: document.id.clone(),
        selected: scored,
        window,
        covered,
        text,
    }
}
