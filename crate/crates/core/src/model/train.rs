use std::path::Path;

use ndarray::Zip;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Task, TrainConfig};
use super::loss::{class_weights, record_loss, TaskLabels, TaskWeights};
use super::params::Parameters;
use super::{predict_logits, Model};
use crate::corpus::write_atomic;
use crate::error::{Error, Result};
use crate::experiment::{compute_metrics, Metrics};
use crate::tokenizer::EncodedPair;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub pair: EncodedPair,
    pub labels: TaskLabels,
}

/// One line of the training history: loss and per-task metrics of one split
/// after one epoch. Metrics of inactive tasks are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub satd_precision: Option<f64>,
    pub satd_recall: Option<f64>,
    pub satd_f1: Option<f64>,
    pub vuln_precision: Option<f64>,
    pub vuln_recall: Option<f64>,
    pub vuln_f1: Option<f64>,
}

impl HistoryRow {
    fn new(epoch: usize, split: &str, loss: f64, satd: Option<Metrics>, vuln: Option<Metrics>) -> Self {
        HistoryRow {
            epoch,
            split: split.to_string(),
            loss,
            satd_precision: satd.map(|m| m.precision),
            satd_recall: satd.map(|m| m.recall),
            satd_f1: satd.map(|m| m.f1),
            vuln_precision: vuln.map(|m| m.precision),
            vuln_recall: vuln.map(|m| m.recall),
            vuln_f1: vuln.map(|m| m.f1),
        }
    }

    pub fn f1(&self, task: Task) -> Option<f64> {
        match task {
            Task::Satd => self.satd_f1,
            Task::Vuln => self.vuln_f1,
        }
    }

    /// Mean F1 over the tasks present; the checkpoint-selection score.
    pub fn score(&self) -> f64 {
        let f: Vec<f64> = [self.satd_f1, self.vuln_f1].into_iter().flatten().collect();
        f.iter().sum::<f64>() / f.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub rows: Vec<HistoryRow>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    pub weights: TaskWeights,
}

impl History {
    pub fn split(&self, split: &str) -> impl Iterator<Item = &HistoryRow> {
        let split = split.to_string();
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv()?.as_bytes())
    }
}

struct Adam {
    m: Parameters,
    v: Parameters,
    step: i32,
}

impl Adam {
    fn new(params: &Parameters) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut Parameters, grads: &Parameters, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let g = grads.tensors();
        let m = self.m.tensors_mut();
        let v = self.v.tensors_mut();
        for ((((_, mut p), (_, g)), (_, mut m)), (_, mut v)) in params.tensors_mut().into_iter().zip(g).zip(m).zip(v) {
            Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                });
        }
    }
}

fn task_labels(data: &[LabeledPair], task: Task) -> Result<Vec<bool>> {
    data.iter()
        .map(|d| {
            d.labels.get(task).ok_or_else(|| Error::Unlabeled {
                id: d.pair.id.clone(),
                label: match task {
                    Task::Satd => "satd",
                    Task::Vuln => "vuln",
                },
            })
        })
        .collect()
}

/// Loss and per-task metrics of `data` under the current parameters, no
/// dropout.
pub(crate) fn evaluate(
    model: &Model,
    data: &[LabeledPair],
    weights: &TaskWeights,
    tc: &TrainConfig,
) -> Result<(f64, Option<Metrics>, Option<Metrics>)> {
    let mut total = 0.0;
    let mut preds: Vec<super::Prediction> = Vec::with_capacity(data.len());
    for chunk in data.chunks(tc.batch_size) {
        let pairs: Vec<&EncodedPair> = chunk.iter().map(|d| &d.pair).collect();
        let (logits, _) = model.forward_batch::<ChaCha8Rng>(&pairs, None)?;
        for (l, d) in logits.iter().zip(chunk) {
            total += record_loss(l, &d.labels, weights, tc.task_loss_weights)?;
            preds.push(predict_logits(l));
        }
    }
    let mut loss = total / data.len() as f64;
    if tc.l2_lambda != 0.0 {
        loss += tc.l2_lambda * model.params.squared_norm();
    }
    let metrics = |task: Task| -> Result<Option<Metrics>> {
        if !model.config.task_mode.tasks().contains(&task) {
            return Ok(None);
        }
        let p: Vec<bool> = preds.iter().map(|p| p.get(task).expect("active task").label).collect();
        Ok(Some(compute_metrics(&p, &task_labels(data, task)?)?))
    };
    Ok((loss, metrics(Task::Satd)?, metrics(Task::Vuln)?))
}

/// Trains with Adam on shuffled mini-batches and returns the parameters of
/// the epoch with the best validation F1 (mean over tasks; earliest on ties).
pub fn train(
    mut model: Model,
    train: &[LabeledPair],
    val: &[LabeledPair],
    tc: &TrainConfig,
) -> Result<(Model, History)> {
    tc.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySplit("training"));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation"));
    }
    let mut weights = TaskWeights::default();
    for task in model.config.task_mode.tasks() {
        let labels = task_labels(train, task)?;
        task_labels(val, task)?;
        if tc.weighted_loss {
            let w = class_weights(&labels)?;
            match task {
                Task::Satd => weights.satd = w,
                Task::Vuln => weights.vuln = w,
            }
        }
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    dropout_rng.set_stream(1);
    let mut adam = Adam::new(&model.params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History {
        weights,
        ..Default::default()
    };
    let mut best: Option<(f64, Parameters)> = None;

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(tc.batch_size) {
            let examples: Vec<&LabeledPair> = batch.iter().map(|&i| &train[i]).collect();
            let (_, grads, _) = model.loss_and_grad(
                &examples,
                &weights,
                tc.task_loss_weights,
                tc.l2_lambda,
                Some(&mut dropout_rng),
            )?;
            if tc.learning_rate > 0.0 {
                adam.update(&mut model.params, &grads, tc.learning_rate);
            }
        }
        let (loss, s, v) = evaluate(&model, train, &weights, tc)?;
        history.rows.push(HistoryRow::new(epoch, "train", loss, s, v));
        let (loss, s, v) = evaluate(&model, val, &weights, tc)?;
        let row = HistoryRow::new(epoch, "val", loss, s, v);
        let score = row.score();
        history.rows.push(row);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.params.clone()));
            history.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok((model, history))
}
