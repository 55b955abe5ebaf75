//! Corpus ingestion: JSONL document/summary pairs, sentence segmentation and
//! tokenization.
//!
//! Every token is lowercased. Segmentation and tokenization are tied together
//! so that tokenizing the sentences one by one yields exactly the token stream
//! of the whole text.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters detached from the edges of a whitespace chunk.
pub const EDGE_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')'];

/// Tokens that never end a sentence when followed by a period.
pub const ABBREVIATIONS: &[&str] = &["mr", "mrs", "dr", "st", "u.s", "e.g", "i.e"];

const SENTENCE_DELIMITERS: &[&str] = &[".", "!", "?"];
const CLOSERS: &[&str] = &["\"", "'", ")"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot open corpus {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("read error in {path} at line {line}: {source}")]
    Read {
        path: PathBuf,
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate document id {id:?} at line {line} (first seen at line {first_line})")]
    DuplicateId {
        id: String,
        line: usize,
        first_line: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub tokens: Vec<String>,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub raw: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn from_raw(id: impl Into<String>, raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let sentences = segment_sentences(&raw);
        Document {
            id: id.into(),
            raw,
            sentences,
        }
    }

    /// All tokens in document order.
    pub fn tokens(&self) -> Vec<String> {
        self.sentences
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect()
    }

    /// All tokens except those of the sentence at `skip`.
    pub fn tokens_without(&self, skip: usize) -> Vec<String> {
        self.sentences
            .iter()
            .filter(|s| s.index != skip)
            .flat_map(|s| s.tokens.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryKind {
    Reference,
    Generated,
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryUnit {
    pub doc_id: String,
    pub kind: SummaryKind,
    /// Original surface text, kept so unmodified summaries round-trip byte for byte.
    pub raw: String,
    pub sentences: Vec<Sentence>,
}

impl SummaryUnit {
    pub fn from_raw(doc_id: impl Into<String>, kind: SummaryKind, raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let sentences = segment_sentences(&raw);
        SummaryUnit {
            doc_id: doc_id.into(),
            kind,
            raw,
            sentences,
        }
    }

    /// Builds a summary from token lists, one per sentence.
    pub fn from_token_sentences(
        doc_id: impl Into<String>,
        kind: SummaryKind,
        sentences: Vec<Vec<String>>,
    ) -> Self {
        let sentences: Vec<Sentence> = sentences
            .into_iter()
            .enumerate()
            .map(|(index, tokens)| Sentence {
                index,
                raw: tokens.join(" "),
                tokens,
            })
            .collect();
        let raw = join_raw(&sentences);
        SummaryUnit {
            doc_id: doc_id.into(),
            kind,
            raw,
            sentences,
        }
    }

    pub fn tokens(&self) -> Vec<String> {
        self.sentences
            .iter()
            .flat_map(|s| s.tokens.iter().cloned())
            .collect()
    }

    pub fn sentence_tokens(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| s.tokens.clone()).collect()
    }
}

pub(crate) fn join_raw(sentences: &[Sentence]) -> String {
    sentences
        .iter()
        .map(|s| s.raw.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercases, splits on whitespace and detaches edge punctuation as separate
/// tokens. Internal hyphens, periods and digits stay inside their token.
pub fn tokenize(raw: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in raw.split_whitespace() {
        tokenize_chunk(chunk, &mut out);
    }
    out
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<String>) {
    let lower = chunk.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut lo = 0;
    while lo < chars.len() && EDGE_PUNCTUATION.contains(&chars[lo]) {
        out.push(chars[lo].to_string());
        lo += 1;
    }
    let mut hi = chars.len();
    while hi > lo && EDGE_PUNCTUATION.contains(&chars[hi - 1]) {
        hi -= 1;
    }
    if hi > lo {
        out.push(chars[lo..hi].iter().collect());
    }
    out.extend(chars[hi..].iter().map(|c| c.to_string()));
}

pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| EDGE_PUNCTUATION.contains(&c))
}

/// Splits text into sentences.
///
/// A sentence ends at a whitespace chunk whose last token (ignoring closing
/// quotes and parentheses) is `.`, `!` or `?`, unless that token is a period
/// directly after an abbreviation. Chunks made only of delimiters and closers
/// that follow a boundary stay with the sentence they close.
pub fn segment_sentences(raw: &str) -> Vec<Sentence> {
    let mut sentences: Vec<Sentence> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut start: Option<usize> = None;
    let mut end = 0usize;
    let mut prev_token: Option<String> = None;
    let mut after_boundary = false;
    let mut last_start = 0usize;

    for (offset, chunk) in chunk_offsets(raw) {
        let mut tokens = Vec::new();
        tokenize_chunk(chunk, &mut tokens);
        let closing_only = tokens
            .iter()
            .all(|t| SENTENCE_DELIMITERS.contains(&t.as_str()) || CLOSERS.contains(&t.as_str()));

        if after_boundary && closing_only {
            if let Some(last) = sentences.last_mut() {
                last.tokens.extend(tokens.iter().cloned());
                end = offset + chunk.len();
                last.raw = raw[last_start..end].to_string();
            }
            prev_token = tokens.last().cloned();
            continue;
        }
        after_boundary = false;

        if start.is_none() {
            start = Some(offset);
        }
        let boundary = ends_sentence(&tokens, prev_token.as_deref());
        prev_token = tokens.last().cloned();
        current.extend(tokens);
        end = offset + chunk.len();

        if boundary {
            let s = start.take().unwrap_or(offset);
            last_start = s;
            sentences.push(Sentence {
                index: sentences.len(),
                tokens: std::mem::take(&mut current),
                raw: raw[s..end].to_string(),
            });
            after_boundary = true;
        }
    }

    if let Some(s) = start {
        if !current.is_empty() {
            sentences.push(Sentence {
                index: sentences.len(),
                tokens: current,
                raw: raw[s..end].to_string(),
            });
        }
    }
    sentences
}

fn chunk_offsets(raw: &str) -> impl Iterator<Item = (usize, &str)> {
    raw.split_whitespace()
        .map(move |chunk| (chunk.as_ptr() as usize - raw.as_ptr() as usize, chunk))
}

fn ends_sentence(tokens: &[String], prev_token: Option<&str>) -> bool {
    let Some(pos) = tokens.iter().rposition(|t| !CLOSERS.contains(&t.as_str())) else {
        return false;
    };
    let last = tokens[pos].as_str();
    if !SENTENCE_DELIMITERS.contains(&last) {
        return false;
    }
    if last == "." {
        let before = if pos > 0 {
            Some(tokens[pos - 1].as_str())
        } else {
            prev_token
        };
        if before.is_some_and(|b| ABBREVIATIONS.contains(&b)) {
            return false;
        }
    }
    true
}

#[derive(Debug, Deserialize)]
struct CorpusLine {
    id: String,
    document: String,
    summary: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

/// Outcome of reading one corpus file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub path: String,
    pub loaded: usize,
    pub skipped: Vec<SkippedLine>,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub pairs: Vec<(Document, SummaryUnit)>,
    pub report: LoadReport,
}

impl LoadedCorpus {
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.pairs.iter().map(|(d, _)| d)
    }
}

/// Reads a JSONL corpus with `id`, `document` and `summary` fields.
///
/// Malformed lines are skipped and listed in the report; a missing file or a
/// repeated id aborts the load. Blank lines are ignored.
pub fn load_corpus(path: &Path, kind: SummaryKind) -> Result<LoadedCorpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    let mut report = LoadReport {
        path: path.display().to_string(),
        ..LoadReport::default()
    };
    let mut pairs = Vec::new();
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();

    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Read {
            path: path.to_path_buf(),
            line: line_no,
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = match serde_json::from_str(&line) {
            Ok(p) => p,
            Err(e) => {
                log::warn!(
                    "{}:{}: skipping malformed line: {}",
                    path.display(),
                    line_no,
                    e
                );
                report.skipped.push(SkippedLine {
                    line: line_no,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        if let Some(&first_line) = seen.get(&parsed.id) {
            return Err(CorpusError::DuplicateId {
                id: parsed.id,
                line: line_no,
                first_line,
            });
        }
        seen.insert(parsed.id.clone(), line_no);
        let doc = Document::from_raw(parsed.id.clone(), parsed.document);
        let summary = SummaryUnit::from_raw(parsed.id, kind, parsed.summary);
        pairs.push((doc, summary));
    }
    report.loaded = pairs.len();
    Ok(LoadedCorpus { pairs, report })
}
