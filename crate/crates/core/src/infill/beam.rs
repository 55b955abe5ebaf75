use std::cmp::Ordering;

use super::ngram::{NGramInfillModel, TokenId};
use super::{InfillCandidate, InfillError, Infiller, MaskedQuery};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamParams {
    pub beam_size: usize,
    pub max_span_len: usize,
    /// Divide completed scores by the number of scored terms (span length + 1).
    pub length_normalize: bool,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams {
            beam_size: 16,
            max_span_len: 4,
            length_normalize: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<TokenId>,
    /// Lexicographic ranks of `tokens`, compared for tie-breaking.
    lex: Vec<u32>,
    score: f64,
}

fn by_score_then_lex(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.lex.cmp(&b.lex))
}

/// Last `ctx` ids of `left ++ span`, written into `h`.
fn history(h: &mut Vec<TokenId>, left: &[TokenId], span: &[TokenId], ctx: usize) {
    let take_span = span.len().min(ctx);
    let take_left = ctx - take_span;
    h.clear();
    h.extend_from_slice(&left[left.len() - take_left..]);
    h.extend_from_slice(&span[span.len() - take_span..]);
}

/// A one-token extension of `beam[parent]`.
struct Expansion {
    parent: usize,
    id: TokenId,
    score: f64,
}

/// The `k` best next tokens after `history` with their log-probabilities.
///
/// Seen continuations always beat unseen ones under add-α smoothing, and all
/// unseen fillers share one probability, so the best `k` are the seen ones by
/// count followed by the lexicographically smallest unseen ones. This equals
/// scoring the full vocabulary and keeping the top `k`.
fn top_expansions(model: &NGramInfillModel, history: &[TokenId], k: usize) -> Vec<(TokenId, f64)> {
    let mut out = Vec::with_capacity(k);
    let alpha = model.alpha();
    let cont = model.continuations(history);
    let total = cont.map_or(0, |c| c.total);
    let denom = total as f64 + alpha * model.vocab_size() as f64;
    if let Some(c) = cont {
        for &(id, n) in c.ranked.iter().take(k) {
            out.push((id, ((n as f64 + alpha) / denom).ln()));
        }
    }
    if out.len() < k {
        let unseen_lp = ((0.0 + alpha) / denom).ln();
        let seen = |id: &TokenId| cont.is_some_and(|c| c.next.contains_key(id));
        out.extend(
            model
                .fillers()
                .iter()
                .copied()
                .filter(|id| !seen(id))
                .take(k - out.len())
                .map(|id| (id, unseen_lp)),
        );
    }
    out
}

/// Beam-search infilling under an n-gram model.
///
/// A span `s` placed in the mask is scored as the sum of `ln P` of each span
/// token given its order−1 predecessors (sentence start padded with `<s>`)
/// plus a bridging term `ln P(right | …)` for the first token after the mask
/// (`</s>` when the mask ends the sentence). At each length the best
/// `beam_size` partial spans survive; each survivor also enters a shared pool
/// as a completed span. The pool's best `beam_size` come back, ties broken by
/// lexicographic token order.
pub fn beam_infill(
    model: &NGramInfillModel,
    query: &MaskedQuery,
    params: BeamParams,
) -> Vec<InfillCandidate> {
    let BeamParams {
        beam_size,
        max_span_len,
        length_normalize,
    } = params;
    if beam_size == 0 || max_span_len == 0 || model.fillers().is_empty() {
        return Vec::new();
    }
    let ctx = model.order() - 1;
    let pos = query.mask_position();
    let left = model.padded_history(&query.masked_text[..pos]);
    let right = query
        .masked_text
        .get(pos + 1)
        .map_or(model.eos_id(), |t| model.id(t));

    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        lex: Vec::new(),
        score: 0.0,
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();

    let mut h = Vec::with_capacity(ctx);
    for _len in 1..=max_span_len {
        let mut expansions = Vec::with_capacity(beam.len() * beam_size);
        for (parent, hyp) in beam.iter().enumerate() {
            history(&mut h, &left, &hyp.tokens, ctx);
            for (id, lp) in top_expansions(model, &h, beam_size) {
                expansions.push(Expansion {
                    parent,
                    id,
                    score: hyp.score + lp,
                });
            }
        }
        // Same order as comparing the extended hypotheses: all parents have
        // equal length, so their lex vectors decide before the new token.
        expansions.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| beam[a.parent].lex.cmp(&beam[b.parent].lex))
                .then_with(|| model.lex_rank(a.id).cmp(&model.lex_rank(b.id)))
        });
        expansions.truncate(beam_size);

        let expanded: Vec<Hypothesis> = expansions
            .iter()
            .map(|e| {
                let parent = &beam[e.parent];
                let mut tokens = Vec::with_capacity(parent.tokens.len() + 1);
                tokens.extend_from_slice(&parent.tokens);
                tokens.push(e.id);
                let mut lex = Vec::with_capacity(parent.lex.len() + 1);
                lex.extend_from_slice(&parent.lex);
                lex.push(model.lex_rank(e.id));
                Hypothesis {
                    tokens,
                    lex,
                    score: e.score,
                }
            })
            .collect();

        for hyp in &expanded {
            history(&mut h, &left, &hyp.tokens, ctx);
            let mut score = hyp.score + model.log_prob_ids(&h, right);
            if length_normalize {
                score /= (hyp.tokens.len() + 1) as f64;
            }
            pool.push(Hypothesis {
                score,
                ..hyp.clone()
            });
        }
        beam = expanded;
    }

    pool.sort_by(by_score_then_lex);
    pool.truncate(beam_size);
    pool.into_iter()
        .enumerate()
        .map(|(i, h)| InfillCandidate {
            tokens: h
                .tokens
                .iter()
                .map(|&id| model.token(id).to_string())
                .collect(),
            rank: i + 1,
            score: h.score,
        })
        .collect()
}

/// In-process infiller backed by an n-gram model.
#[derive(Debug, Clone)]
pub struct BeamInfiller {
    pub model: NGramInfillModel,
    pub max_span_len: usize,
    pub length_normalize: bool,
}

impl Infiller for BeamInfiller {
    fn infill(
        &self,
        query: &MaskedQuery,
        beam_size: usize,
    ) -> Result<Vec<InfillCandidate>, InfillError> {
        Ok(beam_infill(
            &self.model,
            query,
            BeamParams {
                beam_size,
                max_span_len: self.max_span_len,
                length_normalize: self.length_normalize,
            },
        ))
    }

    fn describe(&self) -> String {
        format!(
            "ngram(order={}, alpha={}, max_span_len={})",
            self.model.order(),
            self.model.alpha(),
            self.max_span_len
        )
    }
}
