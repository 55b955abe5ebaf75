//! ROUGE-N (clipped n-gram overlap) and sentence-level ROUGE-L.
//!
//! Inputs are already-tokenized, lowercased token lists; no stemming or
//! stopword removal happens here.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    fn from_counts(matched: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return RougeScore::default();
        }
        let precision = matched as f64 / candidate_total as f64;
        let recall = matched as f64 / reference_total as f64;
        // 2PR/(P+R) reduced to one division, so equal ratios compare equal.
        RougeScore {
            precision,
            recall,
            f1: 2.0 * matched as f64 / (candidate_total + reference_total) as f64,
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N with multiset-clipped n-gram matches.
///
/// # Panics
///
/// Panics if `n` is zero.
pub fn rouge_n<A: AsRef<str>, B: AsRef<str>>(
    candidate: &[A],
    reference: &[B],
    n: usize,
) -> RougeScore {
    assert!(n >= 1, "rouge_n requires n >= 1");
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matched: usize = cand
        .iter()
        .map(|(gram, &c)| refc.get(gram).map_or(0, |&r| c.min(r)))
        .sum();
    RougeScore::from_counts(
        matched,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<A: AsRef<str>, B: AsRef<str>>(a: &[A], b: &[B]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<A: AsRef<str>, B: AsRef<str>>(candidate: &[A], reference: &[B]) -> RougeScore {
    RougeScore::from_counts(
        lcs_len(candidate, reference),
        candidate.len(),
        reference.len(),
    )
}
