//! Literal-aware C lexer that separates comments from code.
//!
//! The scanner works on bytes: every delimiter it cares about is ASCII and
//! UTF-8 continuation bytes never collide with ASCII, so byte offsets are
//! always valid `str` boundaries.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpanKind {
    Code,
    LineComment,
    BlockComment,
    StringLit,
    CharLit,
}

impl SpanKind {
    pub fn is_comment(self) -> bool {
        matches!(self, SpanKind::LineComment | SpanKind::BlockComment)
    }
}

/// A half-open byte range of the source tagged with its lexical class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub kind: SpanKind,
    pub start: usize,
    pub end: usize,
}

/// Splits `src` into contiguous spans covering every byte exactly once.
pub fn scan(src: &str) -> Result<Vec<Span>> {
    let bytes = src.as_bytes();
    let mut spans = Vec::new();
    let mut code_start = 0;
    let mut i = 0;

    let flush_code = |spans: &mut Vec<Span>, from: usize, to: usize| {
        if to > from {
            spans.push(Span {
                kind: SpanKind::Code,
                start: from,
                end: to,
            });
        }
    };

    while i < bytes.len() {
        let (kind, end) = match bytes[i] {
            b'/' if bytes.get(i + 1) == Some(&b'/') => (SpanKind::LineComment, line_comment_end(bytes, i)),
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let end = block_comment_end(bytes, i).ok_or(Error::UnterminatedComment { offset: i })?;
                (SpanKind::BlockComment, end)
            }
            b'"' => (SpanKind::StringLit, literal_end(bytes, i, b'"')),
            b'\'' => (SpanKind::CharLit, literal_end(bytes, i, b'\'')),
            _ => {
                i += 1;
                continue;
            }
        };
        flush_code(&mut spans, code_start, i);
        spans.push(Span { kind, start: i, end });
        i = end;
        code_start = end;
    }
    flush_code(&mut spans, code_start, bytes.len());
    Ok(spans)
}

// Stops before the terminating newline; a backslash-newline continues the comment.
fn line_comment_end(bytes: &[u8], start: usize) -> usize {
    let mut i = start + 2;
    while i < bytes.len() {
        if bytes[i] == b'\n' {
            let continued = i > 0 && bytes[i - 1] == b'\\' || (i > 1 && bytes[i - 1] == b'\r' && bytes[i - 2] == b'\\');
            if !continued {
                return i;
            }
        }
        i += 1;
    }
    bytes.len()
}

fn block_comment_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut i = start + 2;
    while i + 1 < bytes.len() {
        if bytes[i] == b'*' && bytes[i + 1] == b'/' {
            return Some(i + 2);
        }
        i += 1;
    }
    None
}

// Literals end at the matching unescaped quote. An unterminated literal ends
// at the newline, which C forbids inside literals anyway.
fn literal_end(bytes: &[u8], start: usize, quote: u8) -> usize {
    let mut i = start + 1;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'\n' => return i,
            b if b == quote => return i + 1,
            _ => i += 1,
        }
    }
    bytes.len()
}

/// Interior text of a comment span: delimiters removed, block-comment `*`
/// gutters stripped, lines trimmed, and blank edge lines dropped.
pub fn comment_interior(text: &str) -> String {
    if let Some(rest) = text.strip_prefix("//") {
        return rest.trim_start_matches('/').trim().to_string();
    }
    let inner = text
        .strip_prefix("/*")
        .and_then(|t| t.strip_suffix("*/"))
        .unwrap_or(text);
    let lines: Vec<&str> = inner
        .lines()
        .map(|line| line.trim().trim_start_matches('*').trim())
        .collect();
    let first = lines.iter().position(|l| !l.is_empty());
    let last = lines.iter().rposition(|l| !l.is_empty());
    match (first, last) {
        (Some(a), Some(b)) => lines[a..=b].join("\n"),
        _ => String::new(),
    }
}
