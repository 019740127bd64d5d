//! Experiment protocol: splits, metrics, approach cells and report tables.

mod bench;
mod cell;
mod metrics;
mod report;
mod split;
pub mod synthetic;

pub use bench::{benchmark_mt_vs_st, BenchReport};
pub use cell::{run_cell, CellRecord, CellResult, EncodedSplits, Experiment};
pub use metrics::{compute_metrics, f1_score, Metrics};
pub use report::{
    build_report, direction_marker, round3, Approach, Delta, DeltaKind, ExperimentReport, LossMode, ReportRow,
    RowRecord,
};
pub use split::{split, stratified_split, Split};
