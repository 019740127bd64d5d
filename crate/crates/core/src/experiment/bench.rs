use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Median, Statistics};

use super::cell::Experiment;
use super::report::LossMode;
use crate::corpus::InputMode;
use crate::error::{Error, Result};
use crate::model::TaskMode;

/// Wall-clock of one multi-task run relative to the two single-task runs it
/// replaces, for training and for test inference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub runs: usize,
    pub train_ratio: f64,
    pub test_ratio: f64,
    pub train_ratios: Vec<f64>,
    pub test_ratios: Vec<f64>,
    pub train_ratio_std: f64,
    pub test_ratio_std: f64,
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "MT/(ST_SATD+ST_VULN) over {} runs: training {:.3} (sd {:.3}), test {:.3} (sd {:.3})",
            self.runs, self.train_ratio, self.train_ratio_std, self.test_ratio, self.test_ratio_std
        )
    }
}

/// Runs MT, ST SATD and ST vuln `runs` times each (regular loss, comments
/// out) and reports median ratios. At least three runs are required.
pub fn benchmark_mt_vs_st(exp: &mut Experiment, runs: usize) -> Result<BenchReport> {
    if runs < 3 {
        return Err(Error::Config(format!("benchmark needs at least 3 runs, got {runs}")));
    }
    exp.encoded(InputMode::Out)?;
    let (mut train_ratios, mut test_ratios) = (Vec::with_capacity(runs), Vec::with_capacity(runs));
    for _ in 0..runs {
        let mt = exp.run_cell(TaskMode::Multi, LossMode::Regular, InputMode::Out)?;
        let satd = exp.run_cell(TaskMode::StSatd, LossMode::Regular, InputMode::Out)?;
        let vuln = exp.run_cell(TaskMode::StVuln, LossMode::Regular, InputMode::Out)?;
        train_ratios.push(mt.train_seconds / (satd.train_seconds + vuln.train_seconds));
        test_ratios.push(mt.test_seconds / (satd.test_seconds + vuln.test_seconds));
    }
    let median = |v: &[f64]| Data::new(v.to_vec()).median();
    Ok(BenchReport {
        runs,
        train_ratio: median(&train_ratios),
        test_ratio: median(&test_ratios),
        train_ratio_std: train_ratios.iter().std_dev(),
        test_ratio_std: test_ratios.iter().std_dev(),
        train_ratios,
        test_ratios,
    })
}
