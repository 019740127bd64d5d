use serde::{Deserialize, Serialize};

use super::config::Task;
use super::params::Parameters;
use super::TaskLogits;
use crate::error::{Error, Result};

/// Per-class loss multipliers for one binary task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub negative: f64,
    pub positive: f64,
}

impl Default for ClassWeights {
    fn default() -> Self {
        ClassWeights {
            negative: 1.0,
            positive: 1.0,
        }
    }
}

impl ClassWeights {
    pub fn of(&self, label: bool) -> f64 {
        if label {
            self.positive
        } else {
            self.negative
        }
    }
}

/// Inverse-frequency weights `N / (2 * n_c)`, so balanced data gets (1, 1).
pub fn class_weights(labels: &[bool]) -> Result<ClassWeights> {
    let n = labels.len();
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!(
            "{n} labels with {pos} positive and {neg} negative"
        )));
    }
    Ok(ClassWeights {
        negative: n as f64 / (2.0 * neg as f64),
        positive: n as f64 / (2.0 * pos as f64),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskWeights {
    pub satd: ClassWeights,
    pub vuln: ClassWeights,
}

impl TaskWeights {
    pub fn get(&self, task: Task) -> ClassWeights {
        match task {
            Task::Satd => self.satd,
            Task::Vuln => self.vuln,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskLabels {
    pub satd: Option<bool>,
    pub vuln: Option<bool>,
}

impl TaskLabels {
    pub fn get(&self, task: Task) -> Option<bool> {
        match task {
            Task::Satd => self.satd,
            Task::Vuln => self.vuln,
        }
    }
}

/// Softmax over two logits.
pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

pub fn cross_entropy(logits: [f64; 2], label: bool) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[label as usize]
}

/// Weighted cross-entropy of one task and its gradient w.r.t. the logits.
pub(crate) fn task_loss_grad(logits: [f64; 2], label: bool, weight: f64) -> (f64, [f64; 2]) {
    let p = softmax2(logits);
    let y = label as usize;
    let mut g = [weight * p[0], weight * p[1]];
    g[y] -= weight;
    (weight * cross_entropy(logits, label), g)
}

/// Sum over the active tasks of the class-weighted cross-entropy, scaled per
/// task, without any regularisation term.
pub(crate) fn record_loss(
    logits: &TaskLogits,
    labels: &TaskLabels,
    weights: &TaskWeights,
    task_scale: (f64, f64),
) -> Result<f64> {
    let mut total = 0.0;
    for (task, scale) in [(Task::Satd, task_scale.0), (Task::Vuln, task_scale.1)] {
        if let Some(l) = logits.get(task) {
            let y = labels
                .get(task)
                .ok_or_else(|| Error::Config(format!("no {task} label for an active task")))?;
            total += scale * weights.get(task).of(y) * cross_entropy(l, y);
        }
    }
    Ok(total)
}

/// Loss of one record: per-task weighted cross-entropy summed over the active
/// tasks, plus `l2_lambda * ||params||^2`.
pub fn loss(
    logits: &TaskLogits,
    labels: &TaskLabels,
    weights: &TaskWeights,
    l2_lambda: f64,
    params: &Parameters,
) -> Result<f64> {
    let l2 = if l2_lambda == 0.0 {
        0.0
    } else {
        l2_lambda * params.squared_norm()
    };
    Ok(record_loss(logits, labels, weights, (1.0, 1.0))? + l2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ninety_ten_weights() {
        let labels: Vec<bool> = (0..100).map(|i| i < 10).collect();
        let w = class_weights(&labels).unwrap();
        assert!((w.negative - 0.5556).abs() < 1e-4);
        assert!((w.positive - 5.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_and_scaled_weights() {
        let labels = [true, false, true, false];
        assert_eq!(class_weights(&labels).unwrap(), ClassWeights::default());
        let a: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let b: Vec<bool> = a.iter().chain(a.iter()).copied().collect();
        assert_eq!(class_weights(&a).unwrap(), class_weights(&b).unwrap());
        assert!(class_weights(&[true, true]).is_err());
        assert!(class_weights(&[]).is_err());
    }

    #[test]
    fn uniform_logits_cost_ln2() {
        assert!((cross_entropy([0.0, 0.0], true) - std::f64::consts::LN_2).abs() < 1e-15);
        let p = softmax2([2.0, -1.0]);
        assert!((p[0] - 0.9526).abs() < 1e-4);
    }

    #[test]
    fn saturated_logits_have_no_gradient() {
        let (l, g) = task_loss_grad([-40.0, 40.0], true, 1.0);
        assert!(l < 1e-30);
        assert!(g[0].abs() < 1e-30 && g[1].abs() < 1e-30);
    }

    #[test]
    fn missing_label_is_an_error() {
        let logits = TaskLogits {
            satd: Some([0.0, 0.0]),
            vuln: None,
        };
        let r = record_loss(&logits, &TaskLabels::default(), &TaskWeights::default(), (1.0, 1.0));
        assert!(r.is_err());
    }
}
