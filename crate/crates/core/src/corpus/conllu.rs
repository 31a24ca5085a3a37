//! Minimal CoNLL-U reader: token forms and heads per sentence.

use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedTree {
    pub forms: Vec<String>,
    /// 0-based head per token, -1 for the root.
    pub heads: Vec<i64>,
}

/// Reads sentences keyed by their `# sent_id` comment. Sentences without
/// one are keyed by their 1-based position in the file. Multiword token
/// ranges and empty nodes are skipped; relation labels are ignored.
pub fn parse(text: &str) -> Result<IndexMap<String, ParsedTree>> {
    let mut out = IndexMap::new();
    let mut id: Option<String> = None;
    let mut tree = ParsedTree {
        forms: Vec::new(),
        heads: Vec::new(),
    };
    let mut flush = |id: &mut Option<String>, tree: &mut ParsedTree| {
        if !tree.forms.is_empty() {
            let key = id.take().unwrap_or_else(|| (out.len() + 1).to_string());
            out.insert(
                key,
                std::mem::replace(
                    tree,
                    ParsedTree {
                        forms: Vec::new(),
                        heads: Vec::new(),
                    },
                ),
            );
        }
        *id = None;
    };
    for (no, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            flush(&mut id, &mut tree);
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                if k.trim() == "sent_id" {
                    id = Some(v.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |message: String| Error::Parse {
            sent_id: id.clone().unwrap_or_default(),
            field: format!("conllu line {}", no + 1),
            message,
        };
        if cols.len() < 7 {
            return Err(bad(format!("expected 10 columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let head: i64 = cols[6]
            .parse()
            .map_err(|_| bad(format!("head `{}` is not an integer", cols[6])))?;
        tree.forms.push(cols[1].to_string());
        tree.heads.push(head - 1);
    }
    flush(&mut id, &mut tree);
    Ok(out)
}

pub fn read(path: impl AsRef<Path>) -> Result<IndexMap<String, ParsedTree>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}
