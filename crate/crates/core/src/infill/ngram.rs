use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub(crate) type TokenId = u32;
pub(crate) const UNKNOWN: TokenId = TokenId::MAX;
const BOS_ID: TokenId = 0;
const EOS_ID: TokenId = 1;

const MODEL_FORMAT: &str = "factforge-ngram";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("n-gram order must be at least 2, got {0}")]
    Order(usize),
    #[error("smoothing constant must be positive, got {0}")]
    Alpha(f64),
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file is not valid: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Continuations {
    pub total: u64,
    pub next: HashMap<TokenId, u64>,
    /// Filler tokens seen after this history, most frequent first, ties by
    /// lexicographic order.
    pub ranked: Vec<(TokenId, u64)>,
}

/// Add-α smoothed n-gram model over lowercase tokens.
///
/// The prediction vocabulary is every trained (or declared) token plus
/// [`EOS`]; [`BOS`] only ever appears in histories.
#[derive(Debug, Clone)]
pub struct NGramInfillModel {
    order: usize,
    alpha: f64,
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    counts: HashMap<Vec<TokenId>, Continuations>,
    /// Ordinal of each token id in lexicographic order of the token strings.
    lex_rank: Vec<u32>,
    /// Tokens that may appear inside an infilled span, sorted lexicographically.
    fillers: Vec<TokenId>,
}

impl NGramInfillModel {
    pub fn new(order: usize, alpha: f64) -> Result<Self, ModelError> {
        if order < 2 {
            return Err(ModelError::Order(order));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ModelError::Alpha(alpha));
        }
        let mut model = NGramInfillModel {
            order,
            alpha,
            tokens: Vec::new(),
            index: HashMap::new(),
            counts: HashMap::new(),
            lex_rank: Vec::new(),
            fillers: Vec::new(),
        };
        model.intern(BOS);
        model.intern(EOS);
        model.reindex();
        Ok(model)
    }

    /// An untrained model whose vocabulary is `vocabulary` plus [`EOS`].
    pub fn with_vocabulary<S: AsRef<str>>(
        order: usize,
        alpha: f64,
        vocabulary: impl IntoIterator<Item = S>,
    ) -> Result<Self, ModelError> {
        let mut model = Self::new(order, alpha)?;
        for w in vocabulary {
            model.intern(w.as_ref());
        }
        model.reindex();
        Ok(model)
    }

    fn intern(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub(crate) fn id(&self, token: &str) -> TokenId {
        self.index.get(token).copied().unwrap_or(UNKNOWN)
    }

    pub(crate) fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub(crate) fn eos_id(&self) -> TokenId {
        EOS_ID
    }

    fn observe_sentence<S: AsRef<str>>(&mut self, sentence: &[S]) {
        let ctx = self.order - 1;
        let mut ids: Vec<TokenId> = vec![BOS_ID; ctx];
        ids.extend(sentence.iter().map(|t| self.intern(t.as_ref())));
        ids.push(EOS_ID);
        for window in ids.windows(self.order) {
            let (history, next) = window.split_at(ctx);
            let entry = self.counts.entry(history.to_vec()).or_default();
            entry.total += 1;
            *entry.next.entry(next[0]).or_insert(0) += 1;
        }
    }

    fn reindex(&mut self) {
        let mut by_lex: Vec<TokenId> = (0..self.tokens.len() as TokenId).collect();
        by_lex.sort_by(|&a, &b| self.tokens[a as usize].cmp(&self.tokens[b as usize]));
        self.lex_rank = vec![0; self.tokens.len()];
        for (rank, &id) in by_lex.iter().enumerate() {
            self.lex_rank[id as usize] = rank as u32;
        }
        self.fillers = by_lex
            .into_iter()
            .filter(|&id| id != BOS_ID && id != EOS_ID)
            .collect();
        let lex_rank = &self.lex_rank;
        for cont in self.counts.values_mut() {
            let mut ranked: Vec<(TokenId, u64)> = cont
                .next
                .iter()
                .filter(|(&id, _)| id != BOS_ID && id != EOS_ID)
                .map(|(&id, &c)| (id, c))
                .collect();
            ranked.sort_by(|a, b| {
                b.1.cmp(&a.1)
                    .then(lex_rank[a.0 as usize].cmp(&lex_rank[b.0 as usize]))
            });
            cont.ranked = ranked;
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Size of the prediction vocabulary (|V|, including [`EOS`]).
    pub fn vocab_size(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Tokens allowed inside an infilled span, in lexicographic order.
    pub fn filler_tokens(&self) -> impl Iterator<Item = &str> + '_ {
        self.fillers.iter().map(|&id| self.token(id))
    }

    pub(crate) fn fillers(&self) -> &[TokenId] {
        &self.fillers
    }

    pub(crate) fn lex_rank(&self, id: TokenId) -> u32 {
        self.lex_rank[id as usize]
    }

    pub(crate) fn continuations(&self, history: &[TokenId]) -> Option<&Continuations> {
        self.counts.get(history)
    }

    /// Raw count of `next` after `history` (history length must be order−1).
    pub fn count<S: AsRef<str>>(&self, history: &[S], next: &str) -> u64 {
        let Some(h) = self.history_ids(history) else {
            return 0;
        };
        let w = self.id(next);
        self.counts
            .get(&h)
            .and_then(|c| c.next.get(&w))
            .copied()
            .unwrap_or(0)
    }

    /// Total count of continuations after `history`.
    pub fn history_total<S: AsRef<str>>(&self, history: &[S]) -> u64 {
        self.history_ids(history)
            .and_then(|h| self.counts.get(&h))
            .map_or(0, |c| c.total)
    }

    fn history_ids<S: AsRef<str>>(&self, history: &[S]) -> Option<Vec<TokenId>> {
        let ids: Vec<TokenId> = history.iter().map(|t| self.id(t.as_ref())).collect();
        (!ids.contains(&UNKNOWN)).then_some(ids)
    }

    pub(crate) fn log_prob_ids(&self, history: &[TokenId], next: TokenId) -> f64 {
        let (c, total) = match self.counts.get(history) {
            Some(cont) => (cont.next.get(&next).copied().unwrap_or(0), cont.total),
            None => (0, 0),
        };
        ((c as f64 + self.alpha) / (total as f64 + self.alpha * self.vocab_size() as f64)).ln()
    }

    /// `ln P(next | history)` under add-α smoothing. Only the last order−1
    /// history tokens are used; shorter histories are left-padded with [`BOS`].
    pub fn log_prob<S: AsRef<str>>(&self, history: &[S], next: &str) -> f64 {
        let h = self.padded_history(history);
        self.log_prob_ids(&h, self.id(next))
    }

    pub(crate) fn padded_history<S: AsRef<str>>(&self, history: &[S]) -> Vec<TokenId> {
        let ctx = self.order - 1;
        let tail = &history[history.len().saturating_sub(ctx)..];
        let mut h = vec![BOS_ID; ctx - tail.len()];
        h.extend(tail.iter().map(|t| self.id(t.as_ref())));
        h
    }

    /// Sum of `ln P` over the sentence including the end symbol.
    pub fn sentence_log_prob<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let ctx = self.order - 1;
        let mut ids: Vec<TokenId> = vec![BOS_ID; ctx];
        ids.extend(sentence.iter().map(|t| self.id(t.as_ref())));
        ids.push(EOS_ID);
        ids.windows(self.order)
            .map(|w| self.log_prob_ids(&w[..ctx], w[ctx]))
            .sum()
    }

    /// Per-token average of [`Self::sentence_log_prob`], the end symbol
    /// counting as one token.
    pub fn avg_log_prob<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        self.sentence_log_prob(sentence) / (sentence.len() + 1) as f64
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(&self.to_file())
            .map_err(|e| ModelError::Format(e.to_string()))?;
        crate::write_atomic(path, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| ModelError::Format(e.to_string()))?;
        Self::from_file(file)
    }

    fn to_file(&self) -> ModelFile {
        let vocabulary: BTreeSet<String> = self
            .tokens
            .iter()
            .filter(|t| *t != BOS && *t != EOS)
            .cloned()
            .collect();
        let mut counts: Vec<CountEntry> = self
            .counts
            .iter()
            .map(|(h, c)| CountEntry {
                history: h.iter().map(|&id| self.token(id).to_string()).collect(),
                next: c
                    .next
                    .iter()
                    .map(|(&id, &n)| (self.token(id).to_string(), n))
                    .collect(),
            })
            .collect();
        counts.sort_by(|a, b| a.history.cmp(&b.history));
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            order: self.order,
            alpha: self.alpha,
            vocabulary: vocabulary.into_iter().collect(),
            counts,
        }
    }

    fn from_file(file: ModelFile) -> Result<Self, ModelError> {
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ModelError::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let mut model = Self::with_vocabulary(file.order, file.alpha, &file.vocabulary)?;
        for entry in file.counts {
            if entry.history.len() != model.order - 1 {
                return Err(ModelError::Format(format!(
                    "history {:?} has the wrong length for order {}",
                    entry.history, model.order
                )));
            }
            let mut history = Vec::with_capacity(entry.history.len());
            for t in &entry.history {
                match model.index.get(t) {
                    Some(&id) => history.push(id),
                    None => {
                        return Err(ModelError::Format(format!(
                            "unknown token {t:?} in history"
                        )))
                    }
                }
            }
            let mut cont = Continuations::default();
            for (t, n) in entry.next {
                let Some(&id) = model.index.get(&t) else {
                    return Err(ModelError::Format(format!("unknown token {t:?} in counts")));
                };
                cont.total += n;
                cont.next.insert(id, n);
            }
            model.counts.insert(history, cont);
        }
        model.reindex();
        Ok(model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    order: usize,
    alpha: f64,
    vocabulary: Vec<String>,
    counts: Vec<CountEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CountEntry {
    history: Vec<String>,
    next: BTreeMap<String, u64>,
}

/// Counts every document sentence, padded with order−1 [`BOS`] symbols and
/// closed by one [`EOS`]. Summaries are never part of the training data.
pub fn train_ngram<'a>(
    documents: impl IntoIterator<Item = &'a Document>,
    order: usize,
    alpha: f64,
) -> Result<NGramInfillModel, ModelError> {
    train_on_sentences(
        documents
            .into_iter()
            .flat_map(|d| d.sentences.iter().map(|s| s.tokens.as_slice())),
        order,
        alpha,
    )
}

pub fn train_on_sentences<'a>(
    sentences: impl IntoIterator<Item = &'a [String]>,
    order: usize,
    alpha: f64,
) -> Result<NGramInfillModel, ModelError> {
    let mut model = NGramInfillModel::new(order, alpha)?;
    for s in sentences {
        model.observe_sentence(s);
    }
    model.reindex();
    Ok(model)
}
