use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use super::report::{Approach, LossMode, ReportRow};
use super::split::{split, stratified_split, Split};
use crate::corpus::{prepare_input, FunctionRecord, InputMode, PreparedInput};
use crate::error::{Error, Result};
use crate::model::{init_model, train, History, LabeledPair, Model, ModelConfig, TaskLabels, TaskMode, TrainConfig};
use crate::tokenizer::{build_model_input, train_bpe, TokenizerModel, DEFAULT_BUDGET};

/// Outcome of training and testing one approach cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub dataset: String,
    pub task_mode: TaskMode,
    pub loss: LossMode,
    pub input: InputMode,
    pub metrics: Vec<(Approach, Metrics)>,
    pub history: History,
    pub model: Model,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub seed: u64,
}

impl CellResult {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.metrics
            .iter()
            .map(|(a, m)| ReportRow {
                seed: Some(self.seed),
                train_seconds: Some(self.train_seconds),
                test_seconds: Some(self.test_seconds),
                ..ReportRow::from_metrics(*a, self.loss, self.input, m)
            })
            .collect()
    }

    pub fn metric(&self, approach: Approach) -> Option<&Metrics> {
        self.metrics.iter().find(|(a, _)| *a == approach).map(|(_, m)| m)
    }
}

/// Encoded splits of one input mode, with the tokenizer trained on the
/// training split.
#[derive(Debug, Clone)]
pub struct EncodedSplits {
    pub tokenizer: TokenizerModel,
    pub train: Vec<LabeledPair>,
    pub val: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

/// One dataset under a fixed seeded split, shared by every cell so that
/// cells differ only in what they are meant to compare.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub dataset: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub budget: usize,
    /// Records dropped because a label was missing.
    pub excluded_unlabeled: usize,
    splits: Split<FunctionRecord>,
    encoded: BTreeMap<InputMode, EncodedSplits>,
}

impl Experiment {
    /// `model.vocab_size` is the BPE target; each cell's model uses the
    /// size the tokenizer actually reached.
    pub fn new(
        dataset: impl Into<String>,
        records: &[FunctionRecord],
        model: ModelConfig,
        tc: TrainConfig,
    ) -> Result<Self> {
        model.validate()?;
        tc.validate()?;
        let labeled: Vec<FunctionRecord> = records.iter().filter(|r| r.is_fully_labeled()).cloned().collect();
        let excluded_unlabeled = records.len() - labeled.len();
        let splits = if tc.stratified {
            stratified_split(&labeled, tc.split, tc.seed, |r| (r.satd_label, r.vuln_label))?
        } else {
            split(&labeled, tc.split, tc.seed)?
        };
        let budget = DEFAULT_BUDGET.min(model.max_len.saturating_sub(3));
        if budget == 0 {
            return Err(Error::Config(format!(
                "max_len {} leaves no room for tokens",
                model.max_len
            )));
        }
        Ok(Experiment {
            dataset: dataset.into(),
            model,
            train: tc,
            budget,
            excluded_unlabeled,
            splits,
            encoded: BTreeMap::new(),
        })
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        (self.splits.0.len(), self.splits.1.len(), self.splits.2.len())
    }

    pub fn split_records(&self) -> &Split<FunctionRecord> {
        &self.splits
    }

    pub fn encoded(&mut self, input: InputMode) -> Result<&EncodedSplits> {
        if !self.encoded.contains_key(&input) {
            let prep = |rs: &[FunctionRecord]| -> Result<Vec<PreparedInput>> {
                rs.iter().map(|r| prepare_input(r, input)).collect()
            };
            let train_inputs = prep(&self.splits.0)?;
            let tokenizer = train_bpe(&train_inputs, self.model.vocab_size)?;
            let encode = |rs: &[FunctionRecord], inputs: &[PreparedInput]| -> Vec<LabeledPair> {
                rs.iter()
                    .zip(inputs)
                    .map(|(r, p)| LabeledPair {
                        pair: build_model_input(&tokenizer, p, self.budget),
                        labels: TaskLabels {
                            satd: r.satd_label,
                            vuln: r.vuln_label,
                        },
                    })
                    .collect()
            };
            let train = encode(&self.splits.0, &train_inputs);
            let val = encode(&self.splits.1, &prep(&self.splits.1)?);
            let test = encode(&self.splits.2, &prep(&self.splits.2)?);
            self.encoded.insert(
                input,
                EncodedSplits {
                    tokenizer,
                    train,
                    val,
                    test,
                },
            );
        }
        Ok(&self.encoded[&input])
    }

    /// Trains `task_mode` from the shared seed and tests it on the held-out
    /// split. Wall-clock covers training (all epochs) and test inference.
    pub fn run_cell(&mut self, task_mode: TaskMode, loss: LossMode, input: InputMode) -> Result<CellResult> {
        let mut config = self.model.clone();
        config.task_mode = task_mode;
        let tc = TrainConfig {
            weighted_loss: loss == LossMode::Weighted,
            ..self.train.clone()
        };
        let data = self.encoded(input)?;
        config.vocab_size = data.tokenizer.vocab_size();

        let start = Instant::now();
        let (model, history) = train(init_model(&config)?, &data.train, &data.val, &tc)?;
        let train_seconds = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let pairs: Vec<_> = data.test.iter().map(|d| d.pair.clone()).collect();
        let predictions = model.predict(&pairs)?;
        let test_seconds = start.elapsed().as_secs_f64();

        let mut metrics = Vec::new();
        for approach in Approach::of_mode(task_mode) {
            let task = approach.task();
            let p: Vec<bool> = predictions
                .iter()
                .map(|p| p.get(task).expect("active task").label)
                .collect();
            let l: Vec<bool> = data
                .test
                .iter()
                .map(|d| d.labels.get(task).expect("split holds labeled records"))
                .collect();
            metrics.push((approach, compute_metrics(&p, &l)?));
        }
        Ok(CellResult {
            dataset: self.dataset.clone(),
            task_mode,
            loss,
            input,
            metrics,
            history,
            model,
            train_seconds,
            test_seconds,
            seed: tc.seed,
        })
    }

    /// The three training runs (MT, ST SATD, ST vuln) for one loss and input.
    pub fn run_approaches(&mut self, loss: LossMode, input: InputMode) -> Result<Vec<CellResult>> {
        [TaskMode::Multi, TaskMode::StSatd, TaskMode::StVuln]
            .into_iter()
            .map(|m| self.run_cell(m, loss, input))
            .collect()
    }
}

/// One-off cell on its own experiment.
pub fn run_cell(
    dataset: &str,
    records: &[FunctionRecord],
    task_mode: TaskMode,
    loss: LossMode,
    input: InputMode,
    model: &ModelConfig,
    tc: &TrainConfig,
) -> Result<CellResult> {
    Experiment::new(dataset, records, model.clone(), tc.clone())?.run_cell(task_mode, loss, input)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub dataset: String,
    pub task_mode: TaskMode,
    pub loss: LossMode,
    pub input: InputMode,
    pub seed: u64,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub best_epoch: usize,
    pub metrics: Vec<(Approach, Metrics)>,
}

impl From<&CellResult> for CellRecord {
    fn from(c: &CellResult) -> Self {
        CellRecord {
            dataset: c.dataset.clone(),
            task_mode: c.task_mode,
            loss: c.loss,
            input: c.input,
            seed: c.seed,
            train_seconds: c.train_seconds,
            test_seconds: c.test_seconds,
            best_epoch: c.history.best_epoch,
            metrics: c.metrics.clone(),
        }
    }
}
