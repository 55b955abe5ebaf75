//! Bundled 20-document corpus used by the tests and the quick-start.

use std::path::Path;

use crate::corpus::{load_corpus, CorpusError, LoadedCorpus, SummaryKind};

pub const TOY_CORPUS: &str = include_str!("../data/toy_corpus.jsonl");

/// Writes the bundled corpus to `path`.
pub fn write_toy_corpus(path: &Path) -> std::io::Result<()> {
    crate::write_atomic(path, TOY_CORPUS.as_bytes())
}

/// Writes the bundled corpus to `path` and loads it back.
pub fn load_toy_corpus(path: &Path, kind: SummaryKind) -> Result<LoadedCorpus, CorpusError> {
    write_toy_corpus(path).map_err(|source| CorpusError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    load_corpus(path, kind)
}
