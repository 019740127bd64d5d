//! Function segmentation and comment stripping over raw C text.

use super::lexer::{comment_interior, scan, Span, SpanKind};
use super::record::FunctionRecord;
use crate::error::{Error, Result};

/// Removes every comment outside literals.
///
/// Returns the code with comment spans deleted (all other bytes untouched)
/// and the interior text of each removed comment in source order.
pub fn strip_internal_comments(code: &str) -> Result<(String, Vec<String>)> {
    let spans = scan(code)?;
    let mut stripped = String::with_capacity(code.len());
    let mut comments = Vec::new();
    for span in spans {
        let text = &code[span.start..span.end];
        if span.kind.is_comment() {
            comments.push(comment_interior(text));
        } else {
            stripped.push_str(text);
        }
    }
    Ok((stripped, comments))
}

struct PendingComment {
    end: usize,
    interior: String,
}

#[derive(Default)]
struct Item {
    start: usize,
    leading: String,
    /// Last significant byte seen at depth 0 within the item.
    last_sig: u8,
}

/// Segments a C translation unit into top-level function definitions.
///
/// A top-level `{` opens a function body when the last significant token
/// before it is `)`; other top-level blocks (struct, enum, initializer) are
/// skipped. Preprocessor lines are ignored for brace matching and end any
/// pending comment block.
pub fn extract_functions(source: &str) -> Result<Vec<FunctionRecord>> {
    let spans = scan(source)?;
    let bytes = source.as_bytes();

    let mut out = Vec::new();
    let mut open_braces: Vec<usize> = Vec::new();
    let mut pending: Vec<PendingComment> = Vec::new();
    let mut item: Option<Item> = None;
    let mut body_is_function = false;
    let mut at_line_start = true;
    let mut in_directive = false;

    for Span { kind, start, end } in spans {
        let depth = open_braces.len();
        match kind {
            SpanKind::LineComment | SpanKind::BlockComment => {
                if depth == 0 && item.is_none() && !in_directive {
                    if let Some(prev) = pending.last() {
                        let gap = &source[prev.end..start];
                        if gap.matches('\n').count() >= 2 {
                            pending.clear();
                        }
                    }
                    pending.push(PendingComment {
                        end,
                        interior: comment_interior(&source[start..end]),
                    });
                }
                // A line comment runs up to (not including) the newline.
                at_line_start = false;
            }
            SpanKind::StringLit | SpanKind::CharLit => {
                at_line_start = false;
                if in_directive || depth > 0 {
                    continue;
                }
                let it = item.get_or_insert_with(|| start_item(start, &mut pending));
                it.last_sig = bytes[start];
            }
            SpanKind::Code => {
                for pos in start..end {
                    let b = bytes[pos];
                    if in_directive {
                        if b == b'\n' && !continued(bytes, pos) {
                            in_directive = false;
                            at_line_start = true;
                        }
                        continue;
                    }
                    if b == b'\n' {
                        at_line_start = true;
                        continue;
                    }
                    if b.is_ascii_whitespace() {
                        continue;
                    }
                    if b == b'#' && at_line_start {
                        in_directive = true;
                        if open_braces.is_empty() && item.is_none() {
                            pending.clear();
                        }
                        continue;
                    }
                    at_line_start = false;

                    if !open_braces.is_empty() {
                        match b {
                            b'{' => open_braces.push(pos),
                            b'}' => {
                                open_braces.pop();
                                if open_braces.is_empty() {
                                    if body_is_function {
                                        let it = item.take().unwrap_or_default();
                                        out.push(make_record(source, it, pos + 1, out.len()));
                                    } else if let Some(it) = item.as_mut() {
                                        it.last_sig = b'}';
                                    }
                                }
                            }
                            _ => {}
                        }
                        continue;
                    }

                    let it = item.get_or_insert_with(|| start_item(pos, &mut pending));
                    match b {
                        b'{' => {
                            body_is_function = it.last_sig == b')';
                            open_braces.push(pos);
                        }
                        b'}' => return Err(Error::UnbalancedBrace { offset: pos }),
                        b';' => item = None,
                        _ => it.last_sig = b,
                    }
                }
            }
        }
    }
    if let Some(&offset) = open_braces.first() {
        return Err(Error::UnbalancedBrace { offset });
    }
    Ok(out)
}

fn continued(bytes: &[u8], newline: usize) -> bool {
    match newline {
        0 => false,
        n if bytes[n - 1] == b'\\' => true,
        n if n >= 2 && bytes[n - 1] == b'\r' && bytes[n - 2] == b'\\' => true,
        _ => false,
    }
}

fn start_item(start: usize, pending: &mut Vec<PendingComment>) -> Item {
    let leading = pending
        .drain(..)
        .map(|c| c.interior)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    Item {
        start,
        leading,
        last_sig: 0,
    }
}

fn make_record(source: &str, item: Item, end: usize, ordinal: usize) -> FunctionRecord {
    let code = &source[item.start..end];
    let id = match function_name(code) {
        Some(name) => format!("{ordinal}:{name}"),
        None => ordinal.to_string(),
    };
    FunctionRecord {
        id,
        project: String::new(),
        dataset: String::new(),
        code: code.to_string(),
        leading_comment: item.leading,
        satd_label: None,
        vuln_label: None,
    }
}

/// Identifier directly before the first `(` of the signature.
fn function_name(code: &str) -> Option<&str> {
    let paren = code.find('(')?;
    let head = code[..paren].trim_end();
    let start = head
        .rfind(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .map_or(0, |i| i + 1);
    let name = &head[start..];
    (!name.is_empty()).then_some(name)
}
