use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::corpus::InputMode;
use crate::error::{Error, Result};
use crate::model::{Task, TaskMode};

/// One (architecture, task) column group of the comparison tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Approach {
    MtSatd,
    MtVuln,
    StSatd,
    StVuln,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::MtSatd, Approach::MtVuln, Approach::StSatd, Approach::StVuln];

    pub fn task(self) -> Task {
        match self {
            Approach::MtSatd | Approach::StSatd => Task::Satd,
            Approach::MtVuln | Approach::StVuln => Task::Vuln,
        }
    }

    pub fn is_multi(self) -> bool {
        matches!(self, Approach::MtSatd | Approach::MtVuln)
    }

    /// The single-task counterpart of a multi-task column.
    pub fn single(self) -> Approach {
        match self.task() {
            Task::Satd => Approach::StSatd,
            Task::Vuln => Approach::StVuln,
        }
    }

    /// Columns produced by one training run in `mode`.
    pub fn of_mode(mode: TaskMode) -> Vec<Approach> {
        match mode {
            TaskMode::Multi => vec![Approach::MtSatd, Approach::MtVuln],
            TaskMode::StSatd => vec![Approach::StSatd],
            TaskMode::StVuln => vec![Approach::StVuln],
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Approach::MtSatd => "MT_SATD",
            Approach::MtVuln => "MT_VULN",
            Approach::StSatd => "ST_SATD",
            Approach::StVuln => "ST_VULN",
        })
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown approach {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Regular,
    Weighted,
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Regular => "regular",
            LossMode::Weighted => "weighted",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "regular" => Ok(LossMode::Regular),
            "weighted" => Ok(LossMode::Weighted),
            other => Err(Error::Config(format!("unknown loss mode {other:?}"))),
        }
    }
}

/// One table cell group: P/R/F1 of an approach under a loss and input mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: Approach,
    pub loss: LossMode,
    pub input: InputMode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_seconds: Option<f64>,
}

impl ReportRow {
    pub fn new(approach: Approach, loss: LossMode, input: InputMode, precision: f64, recall: f64, f1: f64) -> Self {
        ReportRow {
            approach,
            loss,
            input,
            precision,
            recall,
            f1,
            seed: None,
            train_seconds: None,
            test_seconds: None,
        }
    }

    pub fn from_metrics(approach: Approach, loss: LossMode, input: InputMode, m: &Metrics) -> Self {
        ReportRow::new(approach, loss, input, m.precision, m.recall, m.f1)
    }

    fn key(&self) -> (InputMode, LossMode, Approach) {
        (self.input, self.loss, self.approach)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    /// Multi-task minus single-task F1, same task, loss and input.
    MultiVsSingle,
    /// Weighted minus regular loss F1, same approach and input.
    WeightedVsRegular,
    /// Comments-out minus comments-in F1, same approach and loss.
    OutVsIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub kind: DeltaKind,
    /// The row the delta is printed against.
    pub approach: Approach,
    pub loss: LossMode,
    pub input: InputMode,
    pub value: f64,
}

/// Rounds to the three decimals used in the tables.
pub fn round3(v: f64) -> f64 {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

impl Delta {
    pub fn rounded(&self) -> f64 {
        round3(self.value)
    }

    /// `▲` for a positive rounded delta, `▼` for a negative one, nothing at 0.
    pub fn marker(&self) -> &'static str {
        direction_marker(self.value)
    }
}

pub fn direction_marker(value: f64) -> &'static str {
    let r = round3(value);
    if r > 0.0 {
        "▲"
    } else if r < 0.0 {
        "▼"
    } else {
        ""
    }
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.marker() {
            "" => write!(f, "{:.3}", self.rounded()),
            m => write!(f, "{m} {:.3}", self.rounded().abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub rows: Vec<ReportRow>,
    pub deltas: Vec<Delta>,
}

/// Builds the delta tables from a set of rows.
///
/// Every variant row needs its baseline: a multi-task row needs the matching
/// single-task row, a weighted row the regular one, and a comments-in row the
/// comments-out one. A missing baseline is an error naming it.
pub fn build_report(dataset: &str, rows: &[ReportRow]) -> Result<ExperimentReport> {
    let mut by_key: BTreeMap<(InputMode, LossMode, Approach), &ReportRow> = BTreeMap::new();
    for r in rows {
        if by_key.insert(r.key(), r).is_some() {
            return Err(Error::Config(format!(
                "duplicate cell {} {} {} in {dataset}",
                r.approach, r.loss, r.input
            )));
        }
    }
    let need = |input: InputMode, loss: LossMode, approach: Approach| -> Result<&ReportRow> {
        by_key
            .get(&(input, loss, approach))
            .copied()
            .ok_or_else(|| Error::MissingCell(format!("{dataset} {approach} {loss} loss, comments {input}")))
    };

    let mut deltas = Vec::new();
    for r in by_key.values() {
        if r.approach.is_multi() {
            let base = need(r.input, r.loss, r.approach.single())?;
            deltas.push(delta(DeltaKind::MultiVsSingle, r, r.f1 - base.f1));
        }
        if r.loss == LossMode::Weighted {
            let base = need(r.input, LossMode::Regular, r.approach)?;
            deltas.push(delta(DeltaKind::WeightedVsRegular, r, r.f1 - base.f1));
        }
        if r.input == InputMode::In {
            let out = need(InputMode::Out, r.loss, r.approach)?;
            deltas.push(delta(DeltaKind::OutVsIn, r, out.f1 - r.f1));
        }
    }
    let mut rows: Vec<ReportRow> = by_key.into_values().cloned().collect();
    rows.sort_by_key(|r| (r.input, r.loss, r.approach));
    Ok(ExperimentReport {
        dataset: dataset.to_string(),
        rows,
        deltas,
    })
}

fn delta(kind: DeltaKind, row: &ReportRow, value: f64) -> Delta {
    Delta {
        kind,
        approach: row.approach,
        loss: row.loss,
        input: row.input,
        value,
    }
}

/// Machine-readable line per row, with the deltas printed against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub dataset: String,
    #[serde(flatten)]
    pub row: ReportRow,
    pub delta_f1: Option<f64>,
    pub delta_prime_f1: Option<f64>,
    pub delta_input_f1: Option<f64>,
}

impl ExperimentReport {
    pub fn delta(&self, kind: DeltaKind, approach: Approach, loss: LossMode, input: InputMode) -> Option<&Delta> {
        self.deltas
            .iter()
            .find(|d| d.kind == kind && d.approach == approach && d.loss == loss && d.input == input)
    }

    pub fn row(&self, approach: Approach, loss: LossMode, input: InputMode) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.approach == approach && r.loss == loss && r.input == input)
    }

    pub fn records(&self) -> Vec<RowRecord> {
        self.rows
            .iter()
            .map(|r| {
                let d = |k| self.delta(k, r.approach, r.loss, r.input).map(|d| d.value);
                RowRecord {
                    dataset: self.dataset.clone(),
                    row: r.clone(),
                    delta_f1: d(DeltaKind::MultiVsSingle),
                    delta_prime_f1: d(DeltaKind::WeightedVsRegular),
                    delta_input_f1: d(DeltaKind::OutVsIn),
                }
            })
            .collect()
    }

    /// Plain-text table: one block per (input, loss), MT rows before ST.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut groups: Vec<(InputMode, LossMode)> = self.rows.iter().map(|r| (r.input, r.loss)).collect();
        groups.dedup();
        for (input, loss) in groups {
            let _ = writeln!(out, "{} | {loss} loss | comments {input}", self.dataset);
            let _ = writeln!(
                out,
                "{:<8} {:>9} {:>7} {:>7} {:>9} {:>9} {:>9}",
                "approach", "precision", "recall", "F1", "dF1", "d'F1", "dF1 in"
            );
            for r in self.rows.iter().filter(|r| r.input == input && r.loss == loss) {
                let cell = |k| {
                    self.delta(k, r.approach, r.loss, r.input)
                        .map(|d| d.to_string())
                        .unwrap_or_else(|| "-".into())
                };
                let _ = writeln!(
                    out,
                    "{:<8} {:>9.3} {:>7.3} {:>7.3} {:>9} {:>9} {:>9}",
                    r.approach.to_string(),
                    r.precision,
                    r.recall,
                    r.f1,
                    cell(DeltaKind::MultiVsSingle),
                    cell(DeltaKind::WeightedVsRegular),
                    cell(DeltaKind::OutVsIn),
                );
            }
            out.push('\n');
        }
        out
    }
}
