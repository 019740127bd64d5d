use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::DEFAULT_BUDGET;

/// Which classification heads sit on top of the shared encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    StSatd,
    StVuln,
    Multi,
}

impl TaskMode {
    pub fn has_satd(self) -> bool {
        matches!(self, TaskMode::StSatd | TaskMode::Multi)
    }

    pub fn has_vuln(self) -> bool {
        matches!(self, TaskMode::StVuln | TaskMode::Multi)
    }

    pub fn tasks(self) -> Vec<Task> {
        let mut t = Vec::with_capacity(2);
        if self.has_satd() {
            t.push(Task::Satd);
        }
        if self.has_vuln() {
            t.push(Task::Vuln);
        }
        t
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskMode::StSatd => "st-satd",
            TaskMode::StVuln => "st-vuln",
            TaskMode::Multi => "multi",
        })
    }
}

impl FromStr for TaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "st-satd" => Ok(TaskMode::StSatd),
            "st-vuln" => Ok(TaskMode::StVuln),
            "multi" | "mt" => Ok(TaskMode::Multi),
            other => Err(Error::Config(format!("unknown task mode {other:?}"))),
        }
    }
}

/// A single binary prediction task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Satd,
    Vuln,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Satd => "satd",
            Task::Vuln => "vuln",
        })
    }
}

/// Encoder shape. The feed-forward inner width is `4 * hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub task_mode: TaskMode,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 8000,
            hidden: 128,
            layers: 4,
            heads: 4,
            max_len: 512,
            dropout: 0.1,
            task_mode: TaskMode::Multi,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn ffn_dim(&self) -> usize {
        4 * self.hidden
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("heads", self.heads),
            ("max_len", self.max_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden {} is not divisible by heads {}",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Checks room for a content budget plus the three special tokens.
    pub fn validate_budget(&self, budget: usize) -> Result<()> {
        if self.max_len < budget + 3 {
            return Err(Error::Config(format!(
                "max_len {} cannot hold budget {budget} plus 3 special tokens",
                self.max_len
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count.
    pub fn parameter_count(&self) -> usize {
        let h = self.hidden;
        let f = self.ffn_dim();
        let embeddings = self.vocab_size * h + self.max_len * h;
        let block = 2 * (2 * h) + 4 * (h * h + h) + (h * f + f) + (f * h + h);
        let final_norm = 2 * h;
        let heads = self.task_mode.tasks().len() * (2 * h + 2);
        embeddings + self.layers * block + final_norm + heads
    }
}

/// Optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub weighted_loss: bool,
    pub split: (f64, f64, f64),
    pub stratified: bool,
    /// Scale of the SATD and vulnerability losses in the multi-task sum.
    pub task_loss_weights: (f64, f64),
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-5,
            epochs: 10,
            batch_size: 16,
            l2_lambda: 0.0,
            weighted_loss: false,
            split: (0.8, 0.1, 0.1),
            stratified: false,
            task_loss_weights: (1.0, 1.0),
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if self.l2_lambda < 0.0 {
            return Err(Error::Config("l2_lambda must be non-negative".into()));
        }
        let (a, b, c) = self.split;
        if a <= 0.0 || b <= 0.0 || c <= 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {:?} must be positive and sum to 1",
                self.split
            )));
        }
        Ok(())
    }
}

pub(crate) fn default_budget() -> usize {
    DEFAULT_BUDGET
}
