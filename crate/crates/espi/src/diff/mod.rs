//! Commit ingestion: unified diff parsing, subtractive/additive statement
//! splitting, and resolution of the pre/post functions enclosing a change.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed diff at byte offset {offset}: {reason}")]
    MalformedDiff { offset: usize, reason: String },
    #[error("changed lines exist in {path} ({side}) but no source was supplied")]
    SourceMissing { path: String, side: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineKind {
    Context,
    Subtractive,
    Additive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub kind: LineKind,
    pub text: String,
}

/// One "@@"-headed hunk. `pre_len`/`post_len` are the b/d counts from the
/// `@@ -a,b +c,d @@` header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub pre_start_line: usize,
    pub post_start_line: usize,
    pub pre_len: usize,
    pub post_len: usize,
    pub lines: Vec<DiffLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub path: String,
    pub chunks: Vec<Chunk>,
    pub pre_source: Option<String>,
    pub post_source: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Commit {
    pub id: String,
    pub message: String,
    pub files: Vec<FileDiff>,
    pub label: Option<u8>,
    pub project: Option<String>,
}

/// Function source with its changed lines rebased to function-local
/// coordinates (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSide {
    pub source: String,
    pub changed_lines: BTreeSet<usize>,
}

/// Pre/post functions enclosing one chunk's changes. A side is absent when
/// that side has no changed lines or the change falls outside any function.
#[derive(Debug, Clone, Default)]
pub struct FunctionPair {
    pub pre_function: Option<FunctionSide>,
    pub post_function: Option<FunctionSide>,
}

impl FunctionPair {
    pub fn is_empty(&self) -> bool {
        self.pre_function.is_none() && self.post_function.is_none()
    }
}

fn parse_hunk_header(line: &str, offset: usize) -> Result<(usize, usize, usize, usize), IngestError> {
    let malformed = |reason: &str| IngestError::MalformedDiff {
        offset,
        reason: reason.to_string(),
    };
    let rest = line
        .strip_prefix("@@ -")
        .ok_or_else(|| malformed("hunk header must start with '@@ -'"))?;
    let end = rest
        .find(" @@")
        .ok_or_else(|| malformed("hunk header missing closing '@@'"))?;
    let ranges = &rest[..end];
    let mut parts = ranges.splitn(2, " +");
    let pre = parts.next().unwrap();
    let post = parts
        .next()
        .ok_or_else(|| malformed("hunk header missing '+' range"))?;
    let parse_range = |s: &str| -> Result<(usize, usize), IngestError> {
        let (start, len) = match s.split_once(',') {
            Some((a, b)) => (a, b),
            None => (s, "1"),
        };
        let start = start
            .parse()
            .map_err(|_| malformed("non-numeric start line in hunk header"))?;
        let len = len
            .parse()
            .map_err(|_| malformed("non-numeric length in hunk header"))?;
        Ok((start, len))
    };
    let (a, b) = parse_range(pre)?;
    let (c, d) = parse_range(post)?;
    Ok((a, b, c, d))
}

fn is_file_metadata(line: &str) -> bool {
    line.is_empty()
        || line.starts_with("diff ")
        || line.starts_with("index ")
        || line.starts_with("new file")
        || line.starts_with("deleted file")
        || line.starts_with("old mode")
        || line.starts_with("new mode")
        || line.starts_with("similarity")
        || line.starts_with("rename ")
        || line.starts_with("copy ")
        || line.starts_with("Binary files")
}

fn strip_diff_path(header_path: &str) -> String {
    let p = header_path.split('\t').next().unwrap_or(header_path);
    for prefix in ["a/", "b/"] {
        if let Some(stripped) = p.strip_prefix(prefix) {
            return stripped.to_string();
        }
    }
    p.to_string()
}

/// Parse a unified diff into per-file hunks. Accepts plain and git-style
/// diffs; `\ No newline at end of file` markers are dropped.
pub fn parse_unified_diff(text: &str) -> Result<Vec<FileDiff>, IngestError> {
    let mut files: Vec<FileDiff> = Vec::new();
    let mut current: Option<FileDiff> = None;
    let mut pending_minus_path: Option<String> = None;
    // Remaining pre/post line budget of the open hunk.
    let mut budget: Option<(usize, usize)> = None;
    let mut offset = 0usize;

    for raw in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += raw.len();
        let line = raw.strip_suffix('\n').unwrap_or(raw);

        if let Some((pre_left, post_left)) = budget {
            if pre_left > 0 || post_left > 0 {
                if line.starts_with('\\') {
                    continue;
                }
                let (kind, text) = match line.chars().next() {
                    Some(' ') => (LineKind::Context, &line[1..]),
                    Some('-') => (LineKind::Subtractive, &line[1..]),
                    Some('+') => (LineKind::Additive, &line[1..]),
                    None => (LineKind::Context, ""),
                    _ => {
                        return Err(IngestError::MalformedDiff {
                            offset: line_offset,
                            reason: format!("unexpected line inside hunk: {line:?}"),
                        })
                    }
                };
                let (dp, dq) = match kind {
                    LineKind::Context => (1, 1),
                    LineKind::Subtractive => (1, 0),
                    LineKind::Additive => (0, 1),
                };
                if dp > pre_left && dp > 0 || dq > post_left && dq > 0 {
                    return Err(IngestError::MalformedDiff {
                        offset: line_offset,
                        reason: "hunk body longer than header lengths".into(),
                    });
                }
                budget = Some((pre_left - dp, post_left - dq));
                current
                    .as_mut()
                    .unwrap()
                    .chunks
                    .last_mut()
                    .unwrap()
                    .lines
                    .push(DiffLine { kind, text: text.to_string() });
                continue;
            }
            budget = None;
        }

        if let Some(path) = line.strip_prefix("--- ") {
            pending_minus_path = Some(strip_diff_path(path));
            continue;
        }
        if let Some(path) = line.strip_prefix("+++ ") {
            if let Some(f) = current.take() {
                files.push(f);
            }
            let plus = strip_diff_path(path);
            let chosen = if plus == "/dev/null" {
                pending_minus_path.take().unwrap_or(plus)
            } else {
                pending_minus_path.take();
                plus
            };
            current = Some(FileDiff {
                path: chosen,
                chunks: Vec::new(),
                pre_source: None,
                post_source: None,
            });
            continue;
        }
        if line.starts_with("@@") {
            let file = current.as_mut().ok_or_else(|| IngestError::MalformedDiff {
                offset: line_offset,
                reason: "hunk header before any file header".into(),
            })?;
            let (a, b, c, d) = parse_hunk_header(line, line_offset)?;
            file.chunks.push(Chunk {
                pre_start_line: a,
                post_start_line: c,
                pre_len: b,
                post_len: d,
                lines: Vec::new(),
            });
            budget = Some((b, d));
            continue;
        }
        if is_file_metadata(line) {
            continue;
        }
        return Err(IngestError::MalformedDiff {
            offset: line_offset,
            reason: format!("line outside any hunk: {line:?}"),
        });
    }
    if let Some(f) = current.take() {
        files.push(f);
    }
    Ok(files)
}

/// Re-emit a parsed diff in unified format. Inverse of [`parse_unified_diff`]
/// up to dropped metadata lines.
pub fn serialize_file_diffs(files: &[FileDiff]) -> String {
    let mut out = String::new();
    for f in files {
        out.push_str(&format!("--- a/{}\n", f.path));
        out.push_str(&format!("+++ b/{}\n", f.path));
        for c in &f.chunks {
            out.push_str(&format!(
                "@@ -{},{} +{},{} @@\n",
                c.pre_start_line, c.pre_len, c.post_start_line, c.post_len
            ));
            for l in &c.lines {
                let marker = match l.kind {
                    LineKind::Context => ' ',
                    LineKind::Subtractive => '-',
                    LineKind::Additive => '+',
                };
                out.push(marker);
                out.push_str(&l.text);
                out.push('\n');
            }
        }
    }
    out
}

/// Walk a chunk assigning line numbers: subtractive/context lines advance the
/// pre counter, additive/context lines the post counter. Context lines are
/// reported with their pre-side number.
pub fn split_changes(
    chunk: &Chunk,
) -> (Vec<(usize, String)>, Vec<(usize, String)>, Vec<(usize, String)>) {
    let mut subtractive = Vec::new();
    let mut additive = Vec::new();
    let mut context = Vec::new();
    let mut pre = chunk.pre_start_line;
    let mut post = chunk.post_start_line;
    for l in &chunk.lines {
        match l.kind {
            LineKind::Context => {
                context.push((pre, l.text.clone()));
                pre += 1;
                post += 1;
            }
            LineKind::Subtractive => {
                subtractive.push((pre, l.text.clone()));
                pre += 1;
            }
            LineKind::Additive => {
                additive.push((post, l.text.clone()));
                post += 1;
            }
        }
    }
    (subtractive, additive, context)
}

/// A function's span in a source file: 1-based inclusive line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FunctionSpan {
    pub start_line: usize,
    pub end_line: usize,
}

/// Locate function definition spans by brace tracking. Lines inside strings,
/// chars and comments do not contribute braces. A depth-0 region that opens a
/// brace after a '(' is taken as a function body; preprocessor lines and
/// depth-0 ';' terminators reset the candidate header.
pub fn scan_function_spans(source: &str) -> Vec<FunctionSpan> {
    let mut spans = Vec::new();
    let mut depth: i32 = 0;
    let mut header_start: Option<usize> = None;
    let mut saw_paren = false;
    let mut body_start: Option<usize> = None;
    let mut in_block_comment = false;

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let mut chars = raw.chars().peekable();
        let mut in_str = false;
        let mut in_char = false;
        let mut significant = false;
        while let Some(ch) = chars.next() {
            if in_block_comment {
                if ch == '*' && chars.peek() == Some(&'/') {
                    chars.next();
                    in_block_comment = false;
                }
                continue;
            }
            if in_str {
                if ch == '\\' {
                    chars.next();
                } else if ch == '"' {
                    in_str = false;
                }
                continue;
            }
            if in_char {
                if ch == '\\' {
                    chars.next();
                } else if ch == '\'' {
                    in_char = false;
                }
                continue;
            }
            match ch {
                '/' if chars.peek() == Some(&'/') => break,
                '/' if chars.peek() == Some(&'*') => {
                    chars.next();
                    in_block_comment = true;
                }
                '"' => in_str = true,
                '\'' => in_char = true,
                '{' => {
                    if depth == 0 && saw_paren && body_start.is_none() {
                        body_start = header_start.or(Some(line_no));
                    }
                    depth += 1;
                }
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Some(start) = body_start.take() {
                            spans.push(FunctionSpan { start_line: start, end_line: line_no });
                        }
                        header_start = None;
                        saw_paren = false;
                    }
                }
                '(' if depth == 0 => saw_paren = true,
                ';' if depth == 0 => {
                    header_start = None;
                    saw_paren = false;
                }
                c if !c.is_whitespace() => significant = true,
                _ => {}
            }
        }
        let trimmed = raw.trim_start();
        if depth == 0 && body_start.is_none() {
            if trimmed.starts_with('#') {
                header_start = None;
                saw_paren = false;
            } else if significant && header_start.is_none() {
                header_start = Some(line_no);
            } else if !significant && header_start.is_some() && !saw_paren && trimmed.is_empty() {
                header_start = None;
            }
        }
    }
    spans
}

fn resolve_side(
    source: &str,
    changed: &BTreeSet<usize>,
) -> Option<FunctionSide> {
    if changed.is_empty() {
        return None;
    }
    let spans = scan_function_spans(source);
    // Smallest span containing all changed lines; falls back to the span
    // containing the first changed line when the change straddles functions.
    let containing_all = spans
        .iter()
        .filter(|s| changed.iter().all(|l| *l >= s.start_line && *l <= s.end_line))
        .min_by_key(|s| s.end_line - s.start_line);
    let span = containing_all.or_else(|| {
        let first = *changed.iter().next().unwrap();
        spans
            .iter()
            .filter(|s| first >= s.start_line && first <= s.end_line)
            .min_by_key(|s| s.end_line - s.start_line)
    })?;
    let lines: Vec<&str> = source.lines().collect();
    let text = lines[span.start_line - 1..span.end_line.min(lines.len())].join("\n");
    let local: BTreeSet<usize> = changed
        .iter()
        .filter(|l| **l >= span.start_line && **l <= span.end_line)
        .map(|l| l - span.start_line + 1)
        .collect();
    Some(FunctionSide { source: text, changed_lines: local })
}

/// For each chunk, locate the smallest enclosing function on each changed
/// side and rebase changed lines to function-local coordinates. Chunks whose
/// changes fall outside any function yield an empty pair (the caller falls
/// back to changed-lines-only extraction).
pub fn resolve_function_pair(file_diff: &FileDiff) -> Result<Vec<FunctionPair>, IngestError> {
    let mut pairs = Vec::new();
    for chunk in &file_diff.chunks {
        let (subtractive, additive, _) = split_changes(chunk);
        let sub_lines: BTreeSet<usize> = subtractive.iter().map(|(l, _)| *l).collect();
        let add_lines: BTreeSet<usize> = additive.iter().map(|(l, _)| *l).collect();
        let pre_function = if sub_lines.is_empty() {
            None
        } else {
            let src = file_diff.pre_source.as_deref().ok_or_else(|| {
                IngestError::SourceMissing { path: file_diff.path.clone(), side: "pre" }
            })?;
            resolve_side(src, &sub_lines)
        };
        let post_function = if add_lines.is_empty() {
            None
        } else {
            let src = file_diff.post_source.as_deref().ok_or_else(|| {
                IngestError::SourceMissing { path: file_diff.path.clone(), side: "post" }
            })?;
            resolve_side(src, &add_lines)
        };
        pairs.push(FunctionPair { pre_function, post_function });
    }
    Ok(pairs)
}
