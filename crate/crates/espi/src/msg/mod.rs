//! Commit message sanitization and token-level dependency graphs. Sentences
//! are joined into one graph; consecutive sentence parses are bridged by a
//! "neigh" edge from the last token of one to the first token of the next.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConlluError {
    #[error("row {row}: expected 10 tab-separated columns, found {found}")]
    ColumnCount { row: usize, found: usize },
    #[error("row {row}: head {value:?} is not an integer")]
    BadHead { row: usize, value: String },
    #[error("row {row}: head {head} out of range for a {len}-token sentence")]
    HeadOutOfRange { row: usize, head: usize, len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemovedKind {
    Url,
    Email,
    Signature,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanMessage {
    pub sentences: Vec<Vec<String>>,
    pub removed_spans: Vec<(RemovedKind, String)>,
}

impl CleanMessage {
    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Plain-text rendering; sanitize of this rendering is a fixed point.
    /// Blank lines keep sentence boundaries that have no terminator token.
    pub fn render(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.join(" "))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)[^\s]+").unwrap())
}

fn email_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<?[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}>?").unwrap())
}

fn trailer_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Trailer lines like "Signed-off-by: Someone <x@y.z>".
    RE.get_or_init(|| Regex::new(r"(?mi)^[ \t]*[a-z]+(?:-[a-z]+)*-by:[^\n]*$").unwrap())
}

/// Strip URLs, email addresses, and "...-by:" trailer lines, then split into
/// sentences on terminator punctuation and blank lines. Punctuation stays in
/// the token stream.
pub fn sanitize_message(raw: &str) -> CleanMessage {
    let mut removed_spans = Vec::new();
    let mut strip = |text: String, re: &Regex, kind: RemovedKind| {
        let mut out = String::with_capacity(text.len());
        let mut last = 0;
        for m in re.find_iter(&text) {
            out.push_str(&text[last..m.start()]);
            out.push(' ');
            removed_spans.push((kind, m.as_str().trim().to_string()));
            last = m.end();
        }
        out.push_str(&text[last..]);
        out
    };
    let text = strip(raw.to_string(), trailer_pattern(), RemovedKind::Signature);
    let text = strip(text, url_pattern(), RemovedKind::Url);
    let text = strip(text, email_pattern(), RemovedKind::Email);

    let mut sentences = Vec::new();
    for paragraph in text.split("\n\n") {
        let mut current: Vec<String> = Vec::new();
        for tok in tokenize(paragraph) {
            let terminator = matches!(tok.as_str(), "." | "!" | "?");
            current.push(tok);
            if terminator {
                sentences.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            sentences.push(current);
        }
    }
    CleanMessage { sentences, removed_spans }
}

/// Word characters clump together; every other non-space character is its
/// own token.
fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// One parsed sentence: heads are 1-based token indices, 0 marks the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceParse {
    pub tokens: Vec<String>,
    pub heads: Vec<usize>,
    pub relations: Vec<String>,
}

/// Parse CoNLL-U text: 10 tab-separated columns per token row, blank lines
/// between sentences, comment lines ignored.
pub fn ingest_conllu(text: &str) -> Result<Vec<SentenceParse>, ConlluError> {
    let mut parses = Vec::new();
    let mut tokens = Vec::new();
    let mut heads: Vec<(usize, usize)> = Vec::new(); // (row, head)
    let mut relations = Vec::new();
    let mut flush = |tokens: &mut Vec<String>,
                     heads: &mut Vec<(usize, usize)>,
                     relations: &mut Vec<String>|
     -> Result<(), ConlluError> {
        if tokens.is_empty() {
            return Ok(());
        }
        let len = tokens.len();
        for (row, head) in heads.iter() {
            if *head > len {
                return Err(ConlluError::HeadOutOfRange { row: *row, head: *head, len });
            }
        }
        parses.push(SentenceParse {
            tokens: std::mem::take(tokens),
            heads: std::mem::take(heads).into_iter().map(|(_, h)| h).collect(),
            relations: std::mem::take(relations),
        });
        Ok(())
    };
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            flush(&mut tokens, &mut heads, &mut relations)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(ConlluError::ColumnCount { row, found: cols.len() });
        }
        // Multiword token ranges (id "1-2") carry no head; skip them.
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| ConlluError::BadHead { row, value: cols[6].to_string() })?;
        tokens.push(cols[1].to_string());
        heads.push((row, head));
        relations.push(cols[7].to_string());
    }
    flush(&mut tokens, &mut heads, &mut relations)?;
    Ok(parses)
}

/// Render parses back to CoNLL-U (inverse of `ingest_conllu` on its output).
pub fn serialize_conllu(parses: &[SentenceParse]) -> String {
    let mut out = String::new();
    for p in parses {
        for (i, tok) in p.tokens.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_\n",
                i + 1,
                tok,
                p.heads[i],
                p.relations[i]
            ));
        }
        out.push('\n');
    }
    out
}

/// Linear-chain stand-in when no external parse is available: token i heads
/// token i+1 with relation "next"; the last token is the root.
pub fn fallback_parse(tokens: &[String]) -> SentenceParse {
    assert!(!tokens.is_empty(), "fallback_parse needs at least one token");
    let n = tokens.len();
    let mut heads = Vec::with_capacity(n);
    let mut relations = Vec::with_capacity(n);
    for i in 0..n {
        if i + 1 < n {
            // This token is headed by its successor.
            heads.push(i + 2);
            relations.push("next".to_string());
        } else {
            heads.push(0);
            relations.push("root".to_string());
        }
    }
    SentenceParse { tokens: tokens.to_vec(), heads, relations }
}

pub const EMPTY_MESSAGE_TOKEN: &str = "<empty>";
pub const NEIGH_EDGE: &str = "neigh";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageGraph {
    pub tokens: Vec<String>,
    /// (src, dst, edge type); directed head -> dependent.
    pub edges: Vec<(usize, usize, String)>,
}

/// Merge sentence parses into one graph. Dependencies become head->dependent
/// edges; each sentence boundary adds a "neigh" edge from the previous
/// sentence's last token to the next sentence's first token.
pub fn build_message_graph(parses: &[SentenceParse]) -> MessageGraph {
    if parses.is_empty() {
        return MessageGraph { tokens: vec![EMPTY_MESSAGE_TOKEN.to_string()], edges: Vec::new() };
    }
    let mut tokens = Vec::new();
    let mut edges = Vec::new();
    let mut offset = 0;
    let mut prev_last: Option<usize> = None;
    for p in parses {
        if p.tokens.is_empty() {
            continue;
        }
        if let Some(last) = prev_last {
            edges.push((last, offset, NEIGH_EDGE.to_string()));
        }
        for (i, tok) in p.tokens.iter().enumerate() {
            tokens.push(tok.clone());
            let head = p.heads[i];
            if head > 0 {
                edges.push((offset + head - 1, offset + i, p.relations[i].clone()));
            }
        }
        prev_last = Some(offset + p.tokens.len() - 1);
        offset += p.tokens.len();
    }
    if tokens.is_empty() {
        return MessageGraph { tokens: vec![EMPTY_MESSAGE_TOKEN.to_string()], edges: Vec::new() };
    }
    MessageGraph { tokens, edges }
}

/// Full message-to-graph pipeline with the fallback parser.
pub fn graph_for_message(raw: &str) -> MessageGraph {
    let clean = sanitize_message(raw);
    let parses: Vec<SentenceParse> =
        clean.sentences.iter().map(|s| fallback_parse(s)).collect();
    build_message_graph(&parses)
}

/// Edge-type vocabulary over observed relations, capped; unseen or
/// overflowing types map to a shared unknown bucket at index 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeVocab {
    index: BTreeMap<String, usize>,
}

pub const EDGE_VOCAB_CAP: usize = 64;

impl EdgeVocab {
    pub fn build<'a>(graphs: impl IntoIterator<Item = &'a MessageGraph>) -> Self {
        let mut index = BTreeMap::new();
        for g in graphs {
            for (_, _, ty) in &g.edges {
                if index.len() + 1 >= EDGE_VOCAB_CAP {
                    break;
                }
                let next = index.len() + 1;
                index.entry(ty.clone()).or_insert(next);
            }
        }
        EdgeVocab { index }
    }

    pub fn lookup(&self, edge_type: &str) -> usize {
        self.index.get(edge_type).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.index.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests;
