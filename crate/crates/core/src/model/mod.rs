//! Compact transformer encoder with one two-way classification head per task.
//!
//! Everything runs in `f64` on the CPU. Sequences in a batch are padded to the
//! longest one and padded keys are masked out of attention, so a record's
//! logits do not depend on what it is batched with.

mod checkpoint;
mod config;
mod encoder;
mod gradcheck;
mod loss;
mod params;
mod train;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ModelConfig, Task, TaskMode, TrainConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{class_weights, cross_entropy, loss, softmax2, ClassWeights, TaskLabels, TaskWeights};
pub use params::{Block, Encoder, LayerNorm, Linear, Parameters};
pub use train::{train, History, HistoryRow, LabeledPair};

pub(crate) use config::default_budget;

use crate::error::{Error, Result};
use crate::tokenizer::{EncodedPair, SPECIAL_IDS};
use encoder::{backward_sequence, forward_sequence, Dropout, SequenceCache};

/// Two logits (negative, positive) for every active task.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskLogits {
    pub satd: Option<[f64; 2]>,
    pub vuln: Option<[f64; 2]>,
}

impl TaskLogits {
    pub fn get(&self, task: Task) -> Option<[f64; 2]> {
        match task {
            Task::Satd => self.satd,
            Task::Vuln => self.vuln,
        }
    }

    fn set(&mut self, task: Task, v: [f64; 2]) {
        match task {
            Task::Satd => self.satd = Some(v),
            Task::Vuln => self.vuln = Some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskPrediction {
    pub label: bool,
    /// Softmax probability of the positive class.
    pub probability: f64,
}

impl TaskPrediction {
    pub fn from_logits(logits: [f64; 2]) -> Self {
        let p = softmax2(logits);
        TaskPrediction {
            label: logits[1] > logits[0],
            probability: p[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prediction {
    pub satd: Option<TaskPrediction>,
    pub vuln: Option<TaskPrediction>,
}

impl Prediction {
    pub fn get(&self, task: Task) -> Option<TaskPrediction> {
        match task {
            Task::Satd => self.satd,
            Task::Vuln => self.vuln,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

pub fn init_model(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    Ok(Model {
        config: config.clone(),
        params: Parameters::init(config),
    })
}

/// Per-record state kept between the forward and backward passes.
pub(crate) struct Trace {
    cls: Array1<f64>,
    cache: SequenceCache,
}

impl Model {
    /// Logits for every record. With `training` set, dropout is drawn from a
    /// generator seeded by the model seed.
    pub fn forward(&self, batch: &[EncodedPair], training: bool) -> Result<Vec<TaskLogits>> {
        let refs: Vec<&EncodedPair> = batch.iter().collect();
        if training {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            Ok(self.forward_batch(&refs, Some(&mut rng))?.0)
        } else {
            Ok(self.forward_batch::<ChaCha8Rng>(&refs, None)?.0)
        }
    }

    pub fn predict(&self, inputs: &[EncodedPair]) -> Result<Vec<Prediction>> {
        Ok(self.forward(inputs, false)?.iter().map(predict_logits).collect())
    }

    /// Attention probabilities of one record, indexed `[layer][head]`.
    pub fn attention_maps(&self, pair: &EncodedPair) -> Result<Vec<Vec<Array2<f64>>>> {
        let (_, traces) = self.forward_batch::<ChaCha8Rng>(&[pair], None)?;
        let trace = traces.into_iter().next().expect("one record in, one trace out");
        Ok(trace.cache.blocks.into_iter().map(|b| b.probs).collect())
    }

    fn check(&self, pair: &EncodedPair) -> Result<()> {
        if pair.input_ids.is_empty() {
            return Err(Error::Config(format!("record {:?} has no tokens", pair.id)));
        }
        if pair.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                id: pair.id.clone(),
                len: pair.len(),
                max_len: self.config.max_len,
            });
        }
        if let Some(&bad) = pair.input_ids.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(Error::UnknownTokenId(bad));
        }
        Ok(())
    }

    pub(crate) fn forward_batch<R: Rng>(
        &self,
        batch: &[&EncodedPair],
        mut rng: Option<&mut R>,
    ) -> Result<(Vec<TaskLogits>, Vec<Trace>)> {
        if batch.is_empty() {
            return Err(Error::EmptySplit("batch"));
        }
        for pair in batch {
            self.check(pair)?;
        }
        let width = batch.iter().map(|p| p.len()).max().unwrap_or(0);
        let p = self.config.dropout;
        let mut logits = Vec::with_capacity(batch.len());
        let mut traces = Vec::with_capacity(batch.len());
        let mut ids = Vec::with_capacity(width);
        for pair in batch {
            ids.clear();
            ids.extend_from_slice(&pair.input_ids);
            ids.resize(width, SPECIAL_IDS.pad);
            let dropout = rng.as_deref_mut().map(|rng| Dropout { rng, p });
            let (cls, cache) = forward_sequence(&self.params, self.config.heads, &ids, pair.len(), dropout);
            logits.push(self.heads(&cls));
            traces.push(Trace { cls, cache });
        }
        Ok((logits, traces))
    }

    fn heads(&self, cls: &Array1<f64>) -> TaskLogits {
        let mut out = TaskLogits::default();
        for task in self.config.task_mode.tasks() {
            let head = self.params.head(task).expect("head exists for every active task");
            let z = cls.dot(&head.weight) + &head.bias;
            out.set(task, [z[0], z[1]]);
        }
        out
    }

    /// Mean loss over `examples` (plus the L2 term) and its gradient.
    pub(crate) fn loss_and_grad<R: Rng>(
        &self,
        examples: &[&LabeledPair],
        weights: &TaskWeights,
        task_scale: (f64, f64),
        l2_lambda: f64,
        rng: Option<&mut R>,
    ) -> Result<(f64, Parameters, Vec<TaskLogits>)> {
        let pairs: Vec<&EncodedPair> = examples.iter().map(|e| &e.pair).collect();
        let (logits, traces) = self.forward_batch(&pairs, rng)?;
        let n = examples.len() as f64;
        let mut grads = self.params.zeros_like();
        let mut total = 0.0;
        for ((ex, lg), trace) in examples.iter().zip(&logits).zip(&traces) {
            let mut d_cls = Array1::zeros(self.config.hidden);
            for (task, scale) in [(Task::Satd, task_scale.0), (Task::Vuln, task_scale.1)] {
                let Some(l) = lg.get(task) else { continue };
                let y = ex.labels.get(task).ok_or_else(|| Error::Unlabeled {
                    id: ex.pair.id.clone(),
                    label: match task {
                        Task::Satd => "satd",
                        Task::Vuln => "vuln",
                    },
                })?;
                let (value, g) = loss::task_loss_grad(l, y, weights.get(task).of(y));
                total += scale * value;
                let g = Array1::from(vec![g[0] * scale / n, g[1] * scale / n]);
                let head = self.params.head(task).expect("active head");
                d_cls += &head.weight.dot(&g);
                let gh = grads.head_mut(task).expect("active head");
                let outer = trace
                    .cls
                    .view()
                    .insert_axis(ndarray::Axis(1))
                    .dot(&g.view().insert_axis(ndarray::Axis(0)));
                gh.weight += &outer;
                gh.bias += &g;
            }
            backward_sequence(&self.params, self.config.heads, &trace.cache, &d_cls, &mut grads);
        }
        let mut value = total / n;
        if l2_lambda != 0.0 {
            value += l2_lambda * self.params.squared_norm();
            grads.add_scaled(&self.params, 2.0 * l2_lambda);
        }
        Ok((value, grads, logits))
    }
}

pub fn predict_logits(logits: &TaskLogits) -> Prediction {
    Prediction {
        satd: logits.satd.map(TaskPrediction::from_logits),
        vuln: logits.vuln.map(TaskPrediction::from_logits),
    }
}
