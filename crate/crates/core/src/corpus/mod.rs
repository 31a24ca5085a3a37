//! Sentences, opinion tuples, dependency heads and their on-disk formats.

mod bank;
pub mod conllu;
mod import;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bank::{synthetic_bank, EmbeddingBank, SentenceEmbeddings, SyntheticBank};
pub use import::{import_offset_format, parse_offset_format, ImportOptions, ImportReport};

/// Sentences longer than this are truncated on load.
pub const MAX_SEQUENCE_LENGTH: usize = 128;

/// Inclusive token range `[start, end]`, 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn single(i: usize) -> Self {
        Span { start: i, end: i }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i <= self.end
    }

    pub fn tokens(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }

    /// Whether the span is well formed for a sentence of `len` tokens.
    pub fn fits(&self, len: usize) -> bool {
        self.start <= self.end && self.end < len
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// Binary sentiment class. Class index 0 is positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "P")]
    Positive,
    #[serde(rename = "N")]
    Negative,
}

impl Polarity {
    pub fn class_index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
        }
    }

    pub fn from_class_index(idx: usize) -> Self {
        if idx == 0 {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }
}

/// One opinion tuple. The expression is always present.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Opinion {
    pub holder: Option<Span>,
    pub target: Option<Span>,
    pub expression: Span,
    pub polarity: Polarity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sent_id: String,
    pub tokens: Vec<String>,
    /// Head index of each token, `-1` for the root.
    pub heads: Vec<i64>,
    pub opinions: Vec<Opinion>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub language: String,
    pub sentences: Vec<Sentence>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn get(&self, sent_id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.sent_id == sent_id)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("serializing corpus", e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Checks every invariant a loaded corpus guarantees.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.sentences {
            if !seen.insert(s.sent_id.as_str()) {
                return Err(parse_err(&s.sent_id, "sent_id", "duplicate sentence id"));
            }
            validate_sentence(s)?;
        }
        Ok(())
    }
}

/// Counts of what truncation removed while loading.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub truncated_sentences: usize,
    pub dropped_opinions: usize,
}

fn parse_err(sent_id: &str, field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        sent_id: sent_id.to_string(),
        field: field.to_string(),
        message: message.into(),
    }
}

/// Checks that `heads` encodes a single-rooted tree over `heads.len()` nodes.
pub fn check_tree(heads: &[i64]) -> std::result::Result<(), String> {
    let n = heads.len();
    let roots = heads.iter().filter(|&&h| h == -1).count();
    if roots != 1 {
        return Err(format!("expected exactly one root, found {roots}"));
    }
    if let Some((i, h)) = heads
        .iter()
        .enumerate()
        .find(|(_, &h)| h < -1 || h >= n as i64)
    {
        return Err(format!("head {h} of token {i} out of range"));
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n];
    for start in 0..n {
        let mut path = Vec::new();
        let mut node = start;
        loop {
            match state[node] {
                2 => break,
                1 => return Err(format!("cycle through token {node}")),
                _ => {}
            }
            state[node] = 1;
            path.push(node);
            match heads[node] {
                -1 => break,
                h => node = h as usize,
            }
        }
        path.into_iter().for_each(|p| state[p] = 2);
    }
    Ok(())
}

fn validate_sentence(s: &Sentence) -> Result<()> {
    if s.tokens.is_empty() {
        return Err(parse_err(&s.sent_id, "tokens", "sentence has no tokens"));
    }
    if s.heads.len() != s.tokens.len() {
        return Err(parse_err(
            &s.sent_id,
            "heads",
            format!("{} heads for {} tokens", s.heads.len(), s.tokens.len()),
        ));
    }
    check_tree(&s.heads).map_err(|message| Error::Tree {
        sent_id: s.sent_id.clone(),
        message,
    })?;
    let n = s.len();
    for (k, o) in s.opinions.iter().enumerate() {
        let spans = [
            ("holder", o.holder),
            ("target", o.target),
            ("expression", Some(o.expression)),
        ];
        for (field, span) in spans {
            if let Some(span) = span.filter(|sp| !sp.fits(n)) {
                return Err(parse_err(
                    &s.sent_id,
                    &format!("opinions[{k}].{field}"),
                    format!("span {span} invalid for {n} tokens"),
                ));
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct RawCorpus {
    name: String,
    language: String,
    sentences: Vec<RawSentence>,
}

#[derive(Deserialize)]
struct RawSentence {
    sent_id: String,
    tokens: Vec<String>,
    heads: Vec<i64>,
    #[serde(default)]
    opinions: Vec<RawOpinion>,
}

#[derive(Deserialize)]
struct RawOpinion {
    holder: Option<Vec<i64>>,
    target: Option<Vec<i64>>,
    expression: Option<Vec<i64>>,
    polarity: Option<String>,
}

fn raw_span(sent_id: &str, field: &str, raw: &[i64]) -> Result<Span> {
    match raw {
        &[s, e] if s >= 0 && e >= 0 => Ok(Span::new(s as usize, e as usize)),
        _ => Err(parse_err(
            sent_id,
            field,
            format!("expected [start, end] of non-negative indices, got {raw:?}"),
        )),
    }
}

impl RawSentence {
    fn into_sentence(self) -> Result<Sentence> {
        let id = self.sent_id;
        let mut opinions = Vec::with_capacity(self.opinions.len());
        for (k, o) in self.opinions.into_iter().enumerate() {
            let field = |f: &str| format!("opinions[{k}].{f}");
            let span = |f: &str, raw: Option<Vec<i64>>| -> Result<Option<Span>> {
                raw.map(|r| raw_span(&id, &field(f), &r)).transpose()
            };
            let expression = span("expression", o.expression)?
                .ok_or_else(|| parse_err(&id, &field("expression"), "expression is required"))?;
            let polarity = match o.polarity.as_deref() {
                Some("P") => Polarity::Positive,
                Some("N") => Polarity::Negative,
                other => {
                    return Err(parse_err(
                        &id,
                        &field("polarity"),
                        format!("expected \"P\" or \"N\", got {other:?}"),
                    ))
                }
            };
            opinions.push(Opinion {
                holder: span("holder", o.holder)?,
                target: span("target", o.target)?,
                expression,
                polarity,
            });
        }
        Ok(Sentence {
            sent_id: id,
            tokens: self.tokens,
            heads: self.heads,
            opinions,
        })
    }
}

/// Cuts a valid sentence to its first `max_len` tokens.
///
/// Kept tokens whose head was cut are re-attached to their nearest kept
/// ancestor; if the root was cut, the first orphaned token becomes the new
/// root and the other orphans attach to it. Opinions touching a removed
/// token are dropped. Returns the number of dropped opinions.
pub fn truncate_sentence(s: &mut Sentence, max_len: usize) -> usize {
    if s.len() <= max_len {
        return 0;
    }
    let kept_ancestor = |mut node: usize| -> i64 {
        loop {
            match s.heads[node] {
                -1 => return -1,
                h if (h as usize) < max_len => return h,
                h => node = h as usize,
            }
        }
    };
    let mut heads: Vec<i64> = (0..max_len).map(kept_ancestor).collect();
    let mut orphans = heads
        .iter()
        .enumerate()
        .filter(|(_, &h)| h == -1)
        .map(|(i, _)| i);
    if let Some(root) = orphans.next() {
        let rest: Vec<usize> = orphans.collect();
        rest.into_iter().for_each(|i| heads[i] = root as i64);
    }
    s.tokens.truncate(max_len);
    s.heads = heads;
    let before = s.opinions.len();
    s.opinions.retain(|o| {
        [o.holder, o.target, Some(o.expression)]
            .iter()
            .flatten()
            .all(|sp| sp.end < max_len)
    });
    before - s.opinions.len()
}

/// Parses and validates a corpus in the canonical JSON format.
pub fn parse_corpus(json: &str, max_len: usize) -> Result<(Corpus, LoadReport)> {
    let raw: RawCorpus =
        serde_json::from_str(json).map_err(|e| Error::json("parsing corpus", e))?;
    let mut report = LoadReport::default();
    let mut sentences = Vec::with_capacity(raw.sentences.len());
    for rs in raw.sentences {
        let mut s = rs.into_sentence()?;
        validate_sentence(&s)?;
        if s.len() > max_len {
            report.truncated_sentences += 1;
            report.dropped_opinions += truncate_sentence(&mut s, max_len);
        }
        sentences.push(s);
    }
    let corpus = Corpus {
        name: raw.name,
        language: raw.language,
        sentences,
    };
    corpus.validate()?;
    Ok((corpus, report))
}

/// Loads a canonical corpus file, truncating to `max_len` tokens.
pub fn load_corpus_with(path: impl AsRef<Path>, max_len: usize) -> Result<(Corpus, LoadReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, max_len)
}

/// Loads a canonical corpus file with the default 128-token limit.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Corpus, LoadReport)> {
    load_corpus_with(path, MAX_SEQUENCE_LENGTH)
}
