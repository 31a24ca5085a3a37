//! Conversion from the public character-offset structured sentiment layout.
//!
//! Each record looks like
//! `{"sent_id", "text", "opinions": [{"Source": [[str], ["s:e"]],
//! "Target": .., "Polar_expression": .., "Polarity": "Positive"}]}`
//! with end-exclusive character offsets. Text is tokenized on whitespace.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::conllu::ParsedTree;
use super::{check_tree, truncate_sentence, Corpus, Opinion, Polarity, Sentence, Span};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct ImportOptions {
    pub name: String,
    pub language: String,
    pub max_len: usize,
    /// Dependency trees keyed by sentence id, used when a record carries no
    /// `heads` field of its own.
    pub trees: HashMap<String, ParsedTree>,
}

impl ImportOptions {
    pub fn new(name: impl Into<String>, language: impl Into<String>) -> Self {
        ImportOptions {
            name: name.into(),
            language: language.into(),
            max_len: super::MAX_SEQUENCE_LENGTH,
            trees: HashMap::new(),
        }
    }
}

/// What the importer discarded or approximated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    pub sentences: usize,
    pub opinions: usize,
    pub neutral_dropped: usize,
    pub no_expression_dropped: usize,
    /// Elements with more than one fragment reduced to the first one.
    pub fragments_reduced: usize,
    /// Sentences without a dependency tree that received a left-to-right chain.
    pub chain_heads: usize,
    pub truncated_sentences: usize,
    pub truncation_dropped: usize,
}

#[derive(Deserialize)]
struct Record {
    sent_id: String,
    text: String,
    #[serde(default)]
    opinions: Vec<RecordOpinion>,
    #[serde(default)]
    heads: Option<Vec<i64>>,
}

/// `[[surface strings], ["start:end" offsets]]`
type Element = (Vec<String>, Vec<String>);

#[derive(Deserialize)]
struct RecordOpinion {
    #[serde(rename = "Source", default)]
    source: Option<Element>,
    #[serde(rename = "Target", default)]
    target: Option<Element>,
    #[serde(rename = "Polar_expression", default)]
    expression: Option<Element>,
    #[serde(rename = "Polarity", default)]
    polarity: Option<String>,
}

struct Token {
    start: usize,
    end: usize,
}

/// Whitespace tokens with character (not byte) offsets, end exclusive.
fn tokenize(text: &str) -> (Vec<String>, Vec<Token>) {
    let mut words = Vec::new();
    let mut spans = Vec::new();
    let mut current = String::new();
    let mut begin = 0;
    let mut count = 0;
    for (pos, ch) in text.chars().enumerate() {
        count = pos + 1;
        if ch.is_whitespace() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
                spans.push(Token {
                    start: begin,
                    end: pos,
                });
            }
        } else {
            if current.is_empty() {
                begin = pos;
            }
            current.push(ch);
        }
    }
    if !current.is_empty() {
        words.push(current);
        spans.push(Token {
            start: begin,
            end: count,
        });
    }
    (words, spans)
}

fn parse_offset(sent_id: &str, raw: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse {
        sent_id: sent_id.to_string(),
        field: "offsets".into(),
        message: format!("expected \"start:end\", got {raw:?}"),
    };
    let (s, e) = raw.split_once(':').ok_or_else(bad)?;
    let s = s.trim().parse().map_err(|_| bad())?;
    let e = e.trim().parse().map_err(|_| bad())?;
    if s >= e {
        return Err(bad());
    }
    Ok((s, e))
}

/// Token span exactly covering the character range `[start, end)`.
fn align(sent_id: &str, tokens: &[Token], start: usize, end: usize) -> Result<Span> {
    let first = tokens.iter().position(|t| t.start == start);
    let last = tokens.iter().position(|t| t.end == end);
    match (first, last) {
        (Some(a), Some(b)) if a <= b => Ok(Span::new(a, b)),
        _ => Err(Error::Alignment {
            sent_id: sent_id.to_string(),
            message: format!("characters {start}:{end} do not fall on token boundaries"),
        }),
    }
}

fn element_span(
    sent_id: &str,
    tokens: &[Token],
    element: Option<&Element>,
    report: &mut ImportReport,
) -> Result<Option<Span>> {
    let Some((_, offsets)) = element else {
        return Ok(None);
    };
    let Some(first) = offsets.first() else {
        return Ok(None);
    };
    // a single offset string may itself hold several ";"-separated fragments
    let fragments: Vec<&str> = offsets.iter().flat_map(|o| o.split(';')).collect();
    if fragments.len() > 1 {
        report.fragments_reduced += 1;
    }
    let first = first.split(';').next().unwrap_or(first);
    let (s, e) = parse_offset(sent_id, first)?;
    align(sent_id, tokens, s, e).map(Some)
}

fn map_polarity(sent_id: &str, raw: Option<&str>) -> Result<Option<Polarity>> {
    let lowered = raw.unwrap_or("").to_ascii_lowercase();
    if lowered.contains("positive") {
        Ok(Some(Polarity::Positive))
    } else if lowered.contains("negative") {
        Ok(Some(Polarity::Negative))
    } else if lowered.contains("neutral") {
        Ok(None)
    } else {
        Err(Error::Parse {
            sent_id: sent_id.to_string(),
            field: "Polarity".into(),
            message: format!("unknown polarity {raw:?}"),
        })
    }
}

/// Converts the public JSON layout into a validated corpus.
pub fn parse_offset_format(json: &str, opts: &ImportOptions) -> Result<(Corpus, ImportReport)> {
    let records: Vec<Record> =
        serde_json::from_str(json).map_err(|e| Error::json("parsing offset-format corpus", e))?;
    let mut report = ImportReport::default();
    let mut sentences = Vec::with_capacity(records.len());
    for rec in records {
        let (words, tokens) = tokenize(&rec.text);
        if words.is_empty() {
            return Err(Error::Parse {
                sent_id: rec.sent_id,
                field: "text".into(),
                message: "no tokens".into(),
            });
        }
        let heads = match (rec.heads, opts.trees.get(&rec.sent_id)) {
            (Some(h), _) => h,
            (None, Some(tree)) => {
                if tree.heads.len() != words.len() {
                    return Err(Error::Alignment {
                        sent_id: rec.sent_id,
                        message: format!(
                            "dependency tree has {} tokens, text has {}",
                            tree.heads.len(),
                            words.len()
                        ),
                    });
                }
                tree.heads.clone()
            }
            (None, None) => {
                report.chain_heads += 1;
                (0..words.len() as i64).map(|i| i - 1).collect()
            }
        };
        check_tree(&heads).map_err(|message| Error::Tree {
            sent_id: rec.sent_id.clone(),
            message,
        })?;

        let mut opinions = Vec::new();
        for o in &rec.opinions {
            let Some(polarity) = map_polarity(&rec.sent_id, o.polarity.as_deref())? else {
                report.neutral_dropped += 1;
                continue;
            };
            let id = &rec.sent_id;
            let Some(expression) = element_span(id, &tokens, o.expression.as_ref(), &mut report)?
            else {
                report.no_expression_dropped += 1;
                continue;
            };
            let holder = element_span(id, &tokens, o.source.as_ref(), &mut report)?;
            let target = element_span(id, &tokens, o.target.as_ref(), &mut report)?;
            opinions.push(Opinion {
                holder,
                target,
                expression,
                polarity,
            });
        }
        let mut sentence = Sentence {
            sent_id: rec.sent_id,
            tokens: words,
            heads,
            opinions,
        };
        if sentence.len() > opts.max_len {
            report.truncated_sentences += 1;
            report.truncation_dropped += truncate_sentence(&mut sentence, opts.max_len);
        }
        report.opinions += sentence.opinions.len();
        sentences.push(sentence);
    }
    report.sentences = sentences.len();
    let corpus = Corpus {
        name: opts.name.clone(),
        language: opts.language.clone(),
        sentences,
    };
    corpus.validate()?;
    Ok((corpus, report))
}

pub fn import_offset_format(
    path: impl AsRef<Path>,
    opts: &ImportOptions,
) -> Result<(Corpus, ImportReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_offset_format(&text, opts)
}
