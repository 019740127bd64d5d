//! SATD labelling (task-annotation tags or user pattern lists) and the
//! SATD x vulnerability contingency statistics.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::corpus::{full_comment_text, thousands, FunctionRecord};
use crate::error::{Error, Result};

/// The four IDE task tags.
pub const MAT_TAGS: [&str; 4] = ["todo", "fixme", "xxx", "hack"];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

// Length-preserving case fold: multi-char lowercase expansions keep only the
// first char so offsets line up between folded and original text.
fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// True iff a MAT tag appears as a whole word, ignoring case.
pub fn annotate_mat(comment_text: &str) -> bool {
    comment_text
        .split(|c: char| !is_word_char(c))
        .filter(|w| !w.is_empty())
        .any(|word| {
            let folded: String = word.chars().map(fold).collect();
            MAT_TAGS.contains(&folded.as_str())
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchKind {
    /// Must be delimited by non-word characters (or the text edges).
    Word,
    Substring,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    folded: Vec<char>,
    pub kind: MatchKind,
}

impl Pattern {
    pub fn new(text: &str, kind: MatchKind) -> Self {
        Pattern {
            folded: text.chars().map(fold).collect(),
            kind,
        }
    }

    pub fn text(&self) -> String {
        self.folded.iter().collect()
    }

    fn matches_folded(&self, text: &[char]) -> bool {
        let n = self.folded.len();
        if n == 0 || n > text.len() {
            return false;
        }
        (0..=text.len() - n).any(|at| {
            if text[at..at + n] != self.folded[..] {
                return false;
            }
            match self.kind {
                MatchKind::Substring => true,
                MatchKind::Word => {
                    let before_ok = at == 0 || !is_word_char(text[at - 1]);
                    let after_ok = at + n == text.len() || !is_word_char(text[at + n]);
                    before_ok && after_ok
                }
            }
        })
    }
}

/// A named, non-empty list of case-insensitive patterns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternSet {
    pub name: String,
    patterns: Vec<Pattern>,
}

impl PatternSet {
    pub fn new(name: impl Into<String>, patterns: Vec<Pattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::PatternSet("pattern set is empty".into()));
        }
        let mut seen = HashSet::new();
        for p in &patterns {
            if p.folded.is_empty() {
                return Err(Error::PatternSet("empty pattern".into()));
            }
            if !seen.insert(p.folded.clone()) {
                return Err(Error::PatternSet(format!("duplicate pattern {:?}", p.text())));
            }
        }
        Ok(PatternSet {
            name: name.into(),
            patterns,
        })
    }

    /// The MAT tags as word patterns.
    pub fn mat() -> Self {
        let patterns = MAT_TAGS.iter().map(|t| Pattern::new(t, MatchKind::Word)).collect();
        PatternSet::new("mat", patterns).expect("MAT tags are a valid pattern set")
    }

    /// Parses the line format: `w:<pattern>` or `s:<pattern>`, `#` comments.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut patterns = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (kind, body) = if let Some(rest) = line.strip_prefix("w:") {
                (MatchKind::Word, rest)
            } else if let Some(rest) = line.strip_prefix("s:") {
                (MatchKind::Substring, rest)
            } else {
                return Err(Error::PatternSet(format!(
                    "line {}: expected `w:` or `s:` prefix",
                    idx + 1
                )));
            };
            let body = body.trim();
            if body.is_empty() {
                return Err(Error::PatternSet(format!("line {}: empty pattern", idx + 1)));
            }
            patterns.push(Pattern::new(body, kind));
        }
        PatternSet::new(name, patterns)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "patterns".into());
        Self::parse(name, &text)
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn matches(&self, comment_text: &str) -> bool {
        let folded: Vec<char> = comment_text.chars().map(fold).collect();
        self.patterns.iter().any(|p| p.matches_folded(&folded))
    }
}

pub fn annotate_patterns(comment_text: &str, patterns: &PatternSet) -> bool {
    patterns.matches(comment_text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Annotator {
    Mat,
    Patterns(PatternSet),
}

impl Annotator {
    pub fn is_satd(&self, comment_text: &str) -> bool {
        match self {
            Annotator::Mat => annotate_mat(comment_text),
            Annotator::Patterns(p) => annotate_patterns(comment_text, p),
        }
    }
}

/// Sets `satd_label` from all comments of each record (leading and internal).
/// Vulnerability labels are left untouched.
pub fn label_dataset(records: &[FunctionRecord], annotator: &Annotator) -> Result<Vec<FunctionRecord>> {
    records
        .iter()
        .map(|r| {
            let comments = full_comment_text(r)?;
            Ok(FunctionRecord {
                satd_label: Some(annotator.is_satd(&comments)),
                ..r.clone()
            })
        })
        .collect()
}

/// 2x2 counts. Rows: non-SATD / SATD; columns: non-vulnerable / vulnerable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
}

impl ContingencyTable {
    pub fn new(n00: u64, n01: u64, n10: u64, n11: u64) -> Self {
        ContingencyTable { n00, n01, n10, n11 }
    }

    pub fn total(&self) -> u64 {
        self.n00 + self.n01 + self.n10 + self.n11
    }

    pub fn cells(&self) -> [[u64; 2]; 2] {
        [[self.n00, self.n01], [self.n10, self.n11]]
    }

    pub fn transpose(&self) -> Self {
        ContingencyTable::new(self.n00, self.n10, self.n01, self.n11)
    }

    /// Combines two tables; aggregation over record chunks is order free.
    pub fn merge(&self, other: &Self) -> Self {
        ContingencyTable::new(
            self.n00 + other.n00,
            self.n01 + other.n01,
            self.n10 + other.n10,
            self.n11 + other.n11,
        )
    }
}

impl fmt::Display for ContingencyTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>15} {:>15}", "", "Non-vulnerable", "Vulnerable")?;
        writeln!(
            f,
            "{:<10} {:>15} {:>15}",
            "Non-SATD",
            thousands(self.n00 as usize),
            thousands(self.n01 as usize)
        )?;
        write!(
            f,
            "{:<10} {:>15} {:>15}",
            "SATD",
            thousands(self.n10 as usize),
            thousands(self.n11 as usize)
        )
    }
}

pub fn build_contingency(records: &[FunctionRecord]) -> Result<ContingencyTable> {
    let mut t = ContingencyTable::default();
    for r in records {
        let satd = r.satd_label.ok_or_else(|| Error::Unlabeled {
            id: r.id.clone(),
            label: "SATD",
        })?;
        let vuln = r.vuln_label.ok_or_else(|| Error::Unlabeled {
            id: r.id.clone(),
            label: "vulnerability",
        })?;
        match (satd, vuln) {
            (false, false) => t.n00 += 1,
            (false, true) => t.n01 += 1,
            (true, false) => t.n10 += 1,
            (true, true) => t.n11 += 1,
        }
    }
    Ok(t)
}

/// Pearson independence test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
}

/// Pearson chi-square over the four cells, no continuity correction.
pub fn chi_square(table: &ContingencyTable) -> Result<ChiSquare> {
    let cells = table.cells();
    let n = table.total() as f64;
    let rows = [cells[0][0] + cells[0][1], cells[1][0] + cells[1][1]];
    let cols = [cells[0][0] + cells[1][0], cells[0][1] + cells[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(Error::DegenerateTable(format!(
            "zero marginal (rows {rows:?}, columns {cols:?})"
        )));
    }
    let mut statistic = 0.0;
    for (i, row) in cells.iter().enumerate() {
        for (j, &observed) in row.iter().enumerate() {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            let diff = observed as f64 - expected;
            statistic += diff * diff / expected;
        }
    }
    let dist = ChiSquared::new(1.0).expect("one degree of freedom is valid");
    let p_value = dist.sf(statistic).clamp(0.0, 1.0);
    Ok(ChiSquare {
        statistic,
        dof: 1,
        p_value,
    })
}

/// Plain-text report for a table and its test.
pub fn contingency_report(table: &ContingencyTable, test: &ChiSquare) -> String {
    format!(
        "{table}\nchi2 = {:.1} (dof = {}), p = {:.3e}\n",
        test.statistic, test.dof, test.p_value
    )
}
