//! Rule-based subject/relation/object chunking.
//!
//! One triple per sentence at most. The relation is the first maximal run of
//! verb-lexicon tokens and auxiliaries that contains at least one lexicon
//! verb; the subject is everything before it (minus leading determiners) and
//! the object runs from the relation to the first preposition or punctuation
//! token.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_punctuation, Sentence};

pub const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "has", "have", "had", "will", "would",
];
pub const DETERMINERS: &[&str] = &["a", "an", "the"];
pub const PREPOSITIONS: &[&str] = &[
    "about", "after", "against", "as", "at", "before", "between", "by", "during", "for", "from",
    "in", "into", "of", "on", "over", "since", "through", "to", "under", "until", "with",
];

const BUNDLED_VERBS: &str = include_str!("../data/verbs.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Subject,
    Relation,
    Object,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Subject, Role::Relation, Role::Object];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Subject => "subject",
            Role::Relation => "relation",
            Role::Object => "object",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleSpan {
    pub sentence_index: usize,
    pub role: Role,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl TripleSpan {
    fn new(sentence: &Sentence, role: Role, start: usize, end: usize) -> Self {
        TripleSpan {
            sentence_index: sentence.index,
            role,
            start,
            end,
            text: sentence.tokens[start..end].join(" "),
        }
    }

    pub fn tokens<'a>(&self, sentence_tokens: &'a [String]) -> &'a [String] {
        &sentence_tokens[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: TripleSpan,
    pub relation: TripleSpan,
    pub object: TripleSpan,
}

impl Triple {
    pub fn span(&self, role: Role) -> &TripleSpan {
        match role {
            Role::Subject => &self.subject,
            Role::Relation => &self.relation,
            Role::Object => &self.object,
        }
    }

    pub fn spans(&self) -> [&TripleSpan; 3] {
        [&self.subject, &self.relation, &self.object]
    }
}

/// Set of verb tokens that may anchor a relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerbLexicon {
    verbs: BTreeSet<String>,
}

impl VerbLexicon {
    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_VERBS)
    }

    /// One token per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        let verbs = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect();
        VerbLexicon { verbs }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.verbs.contains(token)
    }

    pub fn len(&self) -> usize {
        self.verbs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.verbs.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for VerbLexicon {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        VerbLexicon {
            verbs: iter.into_iter().map(Into::into).collect(),
        }
    }
}

fn is_auxiliary(token: &str) -> bool {
    AUXILIARIES.contains(&token)
}

/// Extracts the first subject/relation/object triple of a sentence, if any.
pub fn extract_triple(sentence: &Sentence, lexicon: &VerbLexicon) -> Option<Triple> {
    let tokens = &sentence.tokens;
    let in_run = |t: &str| lexicon.contains(t) || is_auxiliary(t);

    let mut rel = None;
    let mut i = 0;
    while i < tokens.len() {
        if !in_run(&tokens[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < tokens.len() && in_run(&tokens[i]) {
            i += 1;
        }
        if tokens[start..i].iter().any(|t| lexicon.contains(t)) {
            rel = Some((start, i));
            break;
        }
    }
    let (rel_start, rel_end) = rel?;

    let mut subj_start = 0;
    while subj_start < rel_start && DETERMINERS.contains(&tokens[subj_start].as_str()) {
        subj_start += 1;
    }
    if subj_start == rel_start {
        return None;
    }

    let obj_end = tokens[rel_end..]
        .iter()
        .position(|t| PREPOSITIONS.contains(&t.as_str()) || is_punctuation(t))
        .map_or(tokens.len(), |p| rel_end + p);
    if obj_end == rel_end {
        return None;
    }

    Some(Triple {
        subject: TripleSpan::new(sentence, Role::Subject, subj_start, rel_start),
        relation: TripleSpan::new(sentence, Role::Relation, rel_start, rel_end),
        object: TripleSpan::new(sentence, Role::Object, rel_end, obj_end),
    })
}

/// List form of [`extract_triple`]: the spans of the (at most one) triple.
pub fn extract_triples(sentence: &Sentence, lexicon: &VerbLexicon) -> Vec<TripleSpan> {
    extract_triple(sentence, lexicon)
        .map(|t| vec![t.subject, t.relation, t.object])
        .unwrap_or_default()
}
