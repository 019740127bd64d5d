use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::extract::strip_internal_comments;
use super::record::FunctionRecord;
use crate::error::{Error, Result};

/// Where internal comments go in the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    /// Internal comments stay inside the function body.
    In,
    /// Internal comments are moved out and appended to the leading comment.
    Out,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::In => "in",
            InputMode::Out => "out",
        })
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "in" => Ok(InputMode::In),
            "out" => Ok(InputMode::Out),
            other => Err(Error::Config(format!("unknown input mode {other:?}"))),
        }
    }
}

/// The (comment, code) pair fed to the tokenizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedInput {
    pub id: String,
    pub comment_text: String,
    pub code_text: String,
    pub mode: InputMode,
}

/// A dataset record with its prepared input, as written to prepared corpora.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedRecord {
    #[serde(flatten)]
    pub record: FunctionRecord,
    pub comment_text: String,
    pub code_text: String,
    pub mode: InputMode,
}

/// Joins non-empty comment parts with single newlines.
pub(crate) fn join_comments<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

/// All comment material of a record: leading comment, then internal comments.
pub fn full_comment_text(record: &FunctionRecord) -> Result<String> {
    let (_, internal) = strip_internal_comments(&record.code)?;
    Ok(join_comments(
        std::iter::once(record.leading_comment.as_str()).chain(internal.iter().map(String::as_str)),
    ))
}

pub fn prepare_input(record: &FunctionRecord, mode: InputMode) -> Result<PreparedInput> {
    let (comment_text, code_text) = match mode {
        InputMode::In => (record.leading_comment.clone(), record.code.clone()),
        InputMode::Out => {
            let (stripped, internal) = strip_internal_comments(&record.code)?;
            let comment = join_comments(
                std::iter::once(record.leading_comment.as_str()).chain(internal.iter().map(String::as_str)),
            );
            (comment, stripped)
        }
    };
    Ok(PreparedInput {
        id: record.id.clone(),
        comment_text,
        code_text,
        mode,
    })
}

pub fn prepare_record(record: &FunctionRecord, mode: InputMode) -> Result<PreparedRecord> {
    let p = prepare_input(record, mode)?;
    Ok(PreparedRecord {
        record: record.clone(),
        comment_text: p.comment_text,
        code_text: p.code_text,
        mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::lexer::scan;

    fn record(leading: &str, code: &str) -> FunctionRecord {
        FunctionRecord {
            id: "r".into(),
            project: "p".into(),
            dataset: "d".into(),
            code: code.into(),
            leading_comment: leading.into(),
            satd_label: None,
            vuln_label: None,
        }
    }

    const AV_BODY: &str = "void *av_realloc(void *ptr, unsigned int size)\n{\n    /* let's disallow possible ambiguous cases */\n    if(size > INT_MAX)\n        return NULL;\n#ifdef MEMALIGN_HACK\n    //FIXME this isn't aligned correctly, though it probably isn't needed\n    if(!!ptr) return av_malloc(size);\n#endif\n    return realloc(ptr, size);\n}";

    #[test]
    fn out_mode_moves_internal_comments() {
        let r = record("av_realloc semantics (same as glibc): if ptr is NULL", AV_BODY);
        let p = prepare_input(&r, InputMode::Out).unwrap();
        assert!(p.comment_text.starts_with("av_realloc semantics"));
        assert!(p.comment_text.contains("FIXME this isn't aligned correctly"));
        assert!(!p.code_text.contains("FIXME"));
        assert!(!p.code_text.contains("av_realloc semantics"));
        assert_eq!(
            p.comment_text,
            "av_realloc semantics (same as glibc): if ptr is NULL\nlet's disallow possible ambiguous cases\nFIXME this isn't aligned correctly, though it probably isn't needed"
        );
        let spans = scan(&p.code_text).unwrap();
        assert!(spans.iter().all(|s| !s.kind.is_comment()));
    }

    #[test]
    fn in_mode_is_verbatim() {
        let r = record("lead", AV_BODY);
        let p = prepare_input(&r, InputMode::In).unwrap();
        assert_eq!(p.code_text, AV_BODY);
        assert_eq!(p.comment_text, "lead");
        let out = prepare_input(&r, InputMode::Out).unwrap();
        assert!(p.code_text.len() >= out.code_text.len());
    }

    #[test]
    fn no_comments_anywhere() {
        let r = record("", "int f(void) { return 0; }");
        for mode in [InputMode::In, InputMode::Out] {
            let p = prepare_input(&r, mode).unwrap();
            assert_eq!(p.comment_text, "");
            assert_eq!(p.code_text, r.code);
        }
    }

    #[test]
    fn out_mode_propagates_strip_error() {
        let r = record("", "int f(void) { /* open }");
        assert!(prepare_input(&r, InputMode::Out).is_err());
        assert!(prepare_input(&r, InputMode::In).is_ok());
    }

    #[test]
    fn prepared_record_serializes_flat() {
        let r = record("c", "int f(){}");
        let pr = prepare_record(&r, InputMode::Out).unwrap();
        let v: serde_json::Value = serde_json::to_value(&pr).unwrap();
        assert_eq!(v["id"], "r");
        assert_eq!(v["mode"], "out");
        assert_eq!(v["comment_text"], "c");
        let back: PreparedRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, pr);
    }
}
