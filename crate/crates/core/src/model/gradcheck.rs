//! Central finite-difference check of the analytic gradients.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ModelConfig;
use super::loss::{ClassWeights, TaskLabels, TaskWeights};
use super::train::LabeledPair;
use super::{init_model, Model};
use crate::error::{Error, Result};
use crate::tokenizer::{EncodedPair, SPECIAL_IDS};

const STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so entries whose true gradient
/// is at rounding level do not dominate.
pub const REL_FLOOR: f64 = 1e-6;
/// Entries sampled from each embedding table.
const EMBEDDING_SAMPLES: usize = 24;
const L2_LAMBDA: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Worst relative error per tensor name.
    pub per_tensor: Vec<(String, f64)>,
    pub entries_checked: usize,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn fixture(config: &ModelConfig) -> Vec<LabeledPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let first = 5u32.min(config.vocab_size as u32 - 1);
    let lengths = [config.max_len, 3, config.max_len.saturating_sub(4).max(2)];
    lengths
        .iter()
        .enumerate()
        .map(|(i, &len)| {
            let body: Vec<u32> = (0..len.saturating_sub(3))
                .map(|_| rng.random_range(first..config.vocab_size as u32))
                .collect();
            let mut ids = vec![SPECIAL_IDS.cls];
            ids.extend_from_slice(&body);
            ids.push(SPECIAL_IDS.sep);
            ids.push(SPECIAL_IDS.eos);
            LabeledPair {
                pair: EncodedPair {
                    id: format!("g{i}"),
                    comment_ids: body.clone(),
                    code_ids: vec![],
                    input_ids: ids,
                    segment_lengths: (body.len(), 0),
                },
                labels: TaskLabels {
                    satd: Some(i % 2 == 0),
                    vuln: Some(i % 2 == 1),
                },
            }
        })
        .collect()
}

fn objective(model: &Model, data: &[&LabeledPair], weights: &TaskWeights) -> Result<f64> {
    Ok(model
        .loss_and_grad::<ChaCha8Rng>(data, weights, (1.0, 1.0), L2_LAMBDA, None)?
        .0)
}

/// Compares analytic gradients of the mean weighted loss (with an L2 term)
/// against central differences on every tensor. Embedding tables are
/// sampled; all other entries are checked exhaustively.
pub fn grad_check(config: &ModelConfig, tolerance: f64) -> Result<GradCheckReport> {
    if config.dropout != 0.0 {
        return Err(Error::Config("gradient check needs dropout 0".into()));
    }
    if config.hidden > 16 || config.layers > 2 || config.max_len > 12 {
        return Err(Error::Config("gradient check is meant for tiny models".into()));
    }
    let mut model = init_model(config)?;
    let data = fixture(config);
    let refs: Vec<&LabeledPair> = data.iter().collect();
    let weights = TaskWeights {
        satd: ClassWeights {
            negative: 0.75,
            positive: 1.5,
        },
        vuln: ClassWeights {
            negative: 1.25,
            positive: 0.6,
        },
    };
    let (_, grads, _) = model.loss_and_grad::<ChaCha8Rng>(&refs, &weights, (1.0, 1.0), L2_LAMBDA, None)?;
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.iter().copied().collect()))
        .collect();

    let used: Vec<u32> = data.iter().flat_map(|d| d.pair.input_ids.iter().copied()).collect();
    let mut pick = ChaCha8Rng::seed_from_u64(config.seed);
    let mut per_tensor = Vec::new();
    let mut checked = 0;
    for (ti, (name, values)) in analytic.iter().enumerate() {
        let entries: Vec<usize> = if name.ends_with("embedding") {
            let cols = config.hidden;
            (0..EMBEDDING_SAMPLES)
                .map(|_| {
                    let row = if name.contains("token") {
                        used[pick.random_range(0..used.len())] as usize
                    } else {
                        pick.random_range(0..config.max_len)
                    };
                    row * cols + pick.random_range(0..cols)
                })
                .collect()
        } else {
            (0..values.len()).collect()
        };
        let mut worst: f64 = 0.0;
        for idx in entries {
            let original = nth(&mut model, ti, idx, None);
            nth(&mut model, ti, idx, Some(original + STEP));
            let up = objective(&model, &refs, &weights)?;
            nth(&mut model, ti, idx, Some(original - STEP));
            let down = objective(&model, &refs, &weights)?;
            nth(&mut model, ti, idx, Some(original));
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(values[idx], numeric));
            checked += 1;
        }
        per_tensor.push((name.clone(), worst));
    }
    let max_relative_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        per_tensor,
        entries_checked: checked,
        passed: max_relative_error < tolerance,
    })
}

// Reads (and optionally overwrites) flat entry `idx` of tensor `ti`.
fn nth(model: &mut Model, ti: usize, idx: usize, set: Option<f64>) -> f64 {
    let mut tensors = model.params.tensors_mut();
    let t = &mut tensors[ti].1;
    let slot = t.iter_mut().nth(idx).expect("index within tensor");
    let old = *slot;
    if let Some(v) = set {
        *slot = v;
    }
    old
}
