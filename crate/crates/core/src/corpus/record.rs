use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One C function with its leading comment and optional ground-truth labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub id: String,
    pub project: String,
    pub dataset: String,
    pub code: String,
    pub leading_comment: String,
    #[serde(rename = "satd", default, skip_serializing_if = "Option::is_none")]
    pub satd_label: Option<bool>,
    #[serde(rename = "vuln", default, skip_serializing_if = "Option::is_none")]
    pub vuln_label: Option<bool>,
}

impl FunctionRecord {
    pub fn is_fully_labeled(&self) -> bool {
        self.satd_label.is_some() && self.vuln_label.is_some()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.code.is_empty() {
            return Err(format!("record {:?} has empty code", self.id));
        }
        if !self.code.contains('{') || !self.code.contains('}') {
            return Err(format!("record {:?} has no function body", self.id));
        }
        Ok(())
    }
}

/// Input formats accepted by [`ingest_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Jsonl,
}

pub fn ingest_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<FunctionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        DatasetFormat::Jsonl => parse_jsonl(&text),
    }
}

/// Parses line-delimited records. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<FunctionRecord>> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: FunctionRecord = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            line: line_no,
            message: e.to_string(),
        })?;
        record
            .validate()
            .map_err(|message| Error::MalformedRecord { line: line_no, message })?;
        if let Some(&first) = seen.get(&record.id) {
            return Err(Error::DuplicateId {
                id: record.id,
                first,
                second: line_no,
            });
        }
        seen.insert(record.id.clone(), line_no);
        records.push(record);
    }
    Ok(records)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_dataset(path: &Path, records: &[FunctionRecord]) -> Result<()> {
    write_atomic(path, to_jsonl(records)?.as_bytes())
}

/// Counts behind the demographics table: sizes and label prevalence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Demographics {
    pub functions: usize,
    pub satd: usize,
    pub vulnerable: usize,
    pub satd_unlabeled: usize,
    pub vuln_unlabeled: usize,
}

impl Demographics {
    pub fn of(records: &[FunctionRecord]) -> Self {
        let mut d = Demographics {
            functions: records.len(),
            ..Default::default()
        };
        for r in records {
            match r.satd_label {
                Some(true) => d.satd += 1,
                Some(false) => {}
                None => d.satd_unlabeled += 1,
            }
            match r.vuln_label {
                Some(true) => d.vulnerable += 1,
                Some(false) => {}
                None => d.vuln_unlabeled += 1,
            }
        }
        d
    }

    pub fn satd_percent(&self) -> f64 {
        percent(self.satd, self.functions)
    }

    pub fn vulnerable_percent(&self) -> f64 {
        percent(self.vulnerable, self.functions)
    }
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Formats an integer with comma thousands separators.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for Demographics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} functions, {:.2}% SATD, {:.2}% vulnerable",
            thousands(self.functions),
            self.satd_percent(),
            self.vulnerable_percent()
        )?;
        let unlabeled = self.satd_unlabeled.max(self.vuln_unlabeled);
        if unlabeled > 0 {
            write!(
                f,
                " ({} without SATD label, {} without vulnerability label)",
                thousands(self.satd_unlabeled),
                thousands(self.vuln_unlabeled)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line_maps_fields() {
        let line = r#"{"id":"f1","project":"qemu","dataset":"devign","code":"int f(){return 0;}","leading_comment":"","satd":false,"vuln":true}"#;
        let recs = parse_jsonl(line).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].vuln_label, Some(true));
        assert_eq!(recs[0].satd_label, Some(false));
        assert_eq!(recs[0].project, "qemu");
    }

    #[test]
    fn empty_input() {
        assert!(parse_jsonl("").unwrap().is_empty());
    }

    #[test]
    fn missing_labels_are_unlabeled() {
        let line = r#"{"id":"a","project":"p","dataset":"d","code":"void f(){}","leading_comment":"x"}"#;
        let r = &parse_jsonl(line).unwrap()[0];
        assert_eq!(r.satd_label, None);
        assert_eq!(r.vuln_label, None);
        assert!(!r.is_fully_labeled());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let text = "{\"id\":\"a\",\"project\":\"p\",\"dataset\":\"d\",\"code\":\"void f(){}\",\"leading_comment\":\"\"}\n{oops\n";
        match parse_jsonl(text).unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bodiless_code_rejected() {
        let line = r#"{"id":"a","project":"p","dataset":"d","code":"int x;","leading_comment":""}"#;
        assert!(matches!(parse_jsonl(line), Err(Error::MalformedRecord { line: 1, .. })));
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let rec = r#"{"id":"a","project":"p","dataset":"d","code":"void f(){}","leading_comment":""}"#;
        let other = r#"{"id":"b","project":"p","dataset":"d","code":"void f(){}","leading_comment":""}"#;
        let text = format!("{rec}\n{other}\n\n{rec}\n");
        match parse_jsonl(&text).unwrap_err() {
            Error::DuplicateId { id, first, second } => {
                assert_eq!(id, "a");
                assert_eq!((first, second), (1, 4));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(144_358), "144,358");
        assert_eq!(thousands(1_000_000), "1,000,000");
    }
}
