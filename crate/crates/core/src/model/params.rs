use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, Task};

const INIT_STD: f64 = 0.02;

// Independent RNG streams so heads do not perturb encoder initialisation.
const ENCODER_STREAM: u64 = 0;
const SATD_HEAD_STREAM: u64 = 1;
const VULN_HEAD_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// Shape `[in, out]`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> Self {
        Linear {
            weight: normal(rng, inputs, outputs),
            bias: Array1::zeros(outputs),
        }
    }

    fn zeros_like(&self) -> Self {
        Linear {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }

    fn zeros_like(&self) -> Self {
        LayerNorm {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
        }
    }
}

/// Pre-norm transformer block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub attn_norm: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attn_out: Linear,
    pub ffn_norm: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
}

impl Block {
    fn init(rng: &mut ChaCha8Rng, hidden: usize, ffn: usize) -> Self {
        Block {
            attn_norm: LayerNorm::new(hidden),
            query: Linear::init(rng, hidden, hidden),
            key: Linear::init(rng, hidden, hidden),
            value: Linear::init(rng, hidden, hidden),
            attn_out: Linear::init(rng, hidden, hidden),
            ffn_norm: LayerNorm::new(hidden),
            ffn_in: Linear::init(rng, hidden, ffn),
            ffn_out: Linear::init(rng, ffn, hidden),
        }
    }

    fn zeros_like(&self) -> Self {
        Block {
            attn_norm: self.attn_norm.zeros_like(),
            query: self.query.zeros_like(),
            key: self.key.zeros_like(),
            value: self.value.zeros_like(),
            attn_out: self.attn_out.zeros_like(),
            ffn_norm: self.ffn_norm.zeros_like(),
            ffn_in: self.ffn_in.zeros_like(),
            ffn_out: self.ffn_out.zeros_like(),
        }
    }
}

/// The shared encoder: embeddings, blocks, final norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub blocks: Vec<Block>,
    pub final_norm: LayerNorm,
}

/// All trainable tensors. Gradients and optimizer moments reuse this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub encoder: Encoder,
    pub satd_head: Option<Linear>,
    pub vuln_head: Option<Linear>,
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let dist = Normal::new(0.0, INIT_STD).expect("valid std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl Parameters {
    pub fn init(config: &ModelConfig) -> Self {
        let h = config.hidden;
        let mut rng = stream(config.seed, ENCODER_STREAM);
        let token_embedding = normal(&mut rng, config.vocab_size, h);
        let position_embedding = normal(&mut rng, config.max_len, h);
        let blocks = (0..config.layers)
            .map(|_| Block::init(&mut rng, h, config.ffn_dim()))
            .collect();
        let encoder = Encoder {
            token_embedding,
            position_embedding,
            blocks,
            final_norm: LayerNorm::new(h),
        };
        let head = |s| Linear::init(&mut stream(config.seed, s), h, 2);
        Parameters {
            encoder,
            satd_head: config.task_mode.has_satd().then(|| head(SATD_HEAD_STREAM)),
            vuln_head: config.task_mode.has_vuln().then(|| head(VULN_HEAD_STREAM)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let e = &self.encoder;
        Parameters {
            encoder: Encoder {
                token_embedding: Array2::zeros(e.token_embedding.raw_dim()),
                position_embedding: Array2::zeros(e.position_embedding.raw_dim()),
                blocks: e.blocks.iter().map(Block::zeros_like).collect(),
                final_norm: e.final_norm.zeros_like(),
            },
            satd_head: self.satd_head.as_ref().map(Linear::zeros_like),
            vuln_head: self.vuln_head.as_ref().map(Linear::zeros_like),
        }
    }

    pub fn head(&self, task: Task) -> Option<&Linear> {
        match task {
            Task::Satd => self.satd_head.as_ref(),
            Task::Vuln => self.vuln_head.as_ref(),
        }
    }

    pub fn head_mut(&mut self, task: Task) -> Option<&mut Linear> {
        match task {
            Task::Satd => self.satd_head.as_mut(),
            Task::Vuln => self.vuln_head.as_mut(),
        }
    }

    /// Every tensor with a stable dotted name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        let e = &self.encoder;
        out.push((
            "encoder.token_embedding".to_string(),
            e.token_embedding.view().into_dyn(),
        ));
        out.push((
            "encoder.position_embedding".to_string(),
            e.position_embedding.view().into_dyn(),
        ));
        for (i, b) in e.blocks.iter().enumerate() {
            let p = format!("encoder.blocks.{i}");
            push_norm(&mut out, &format!("{p}.attn_norm"), &b.attn_norm);
            push_linear(&mut out, &format!("{p}.query"), &b.query);
            push_linear(&mut out, &format!("{p}.key"), &b.key);
            push_linear(&mut out, &format!("{p}.value"), &b.value);
            push_linear(&mut out, &format!("{p}.attn_out"), &b.attn_out);
            push_norm(&mut out, &format!("{p}.ffn_norm"), &b.ffn_norm);
            push_linear(&mut out, &format!("{p}.ffn_in"), &b.ffn_in);
            push_linear(&mut out, &format!("{p}.ffn_out"), &b.ffn_out);
        }
        push_norm(&mut out, "encoder.final_norm", &e.final_norm);
        if let Some(h) = &self.satd_head {
            push_linear(&mut out, "satd_head", h);
        }
        if let Some(h) = &self.vuln_head {
            push_linear(&mut out, "vuln_head", h);
        }
        out
    }

    /// Mutable counterpart of [`Parameters::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        let e = &mut self.encoder;
        out.push((
            "encoder.token_embedding".to_string(),
            e.token_embedding.view_mut().into_dyn(),
        ));
        out.push((
            "encoder.position_embedding".to_string(),
            e.position_embedding.view_mut().into_dyn(),
        ));
        for (i, b) in e.blocks.iter_mut().enumerate() {
            let p = format!("encoder.blocks.{i}");
            push_norm_mut(&mut out, &format!("{p}.attn_norm"), &mut b.attn_norm);
            push_linear_mut(&mut out, &format!("{p}.query"), &mut b.query);
            push_linear_mut(&mut out, &format!("{p}.key"), &mut b.key);
            push_linear_mut(&mut out, &format!("{p}.value"), &mut b.value);
            push_linear_mut(&mut out, &format!("{p}.attn_out"), &mut b.attn_out);
            push_norm_mut(&mut out, &format!("{p}.ffn_norm"), &mut b.ffn_norm);
            push_linear_mut(&mut out, &format!("{p}.ffn_in"), &mut b.ffn_in);
            push_linear_mut(&mut out, &format!("{p}.ffn_out"), &mut b.ffn_out);
        }
        push_norm_mut(&mut out, "encoder.final_norm", &mut e.final_norm);
        if let Some(h) = &mut self.satd_head {
            push_linear_mut(&mut out, "satd_head", h);
        }
        if let Some(h) = &mut self.vuln_head {
            push_linear_mut(&mut out, "vuln_head", h);
        }
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Parameters, scale: f64) {
        let others = other.tensors();
        for ((_, mut mine), (_, theirs)) in self.tensors_mut().into_iter().zip(others) {
            mine.scaled_add(scale, &theirs);
        }
    }
}

fn push_linear<'a>(out: &mut Vec<(String, ArrayViewD<'a, f64>)>, name: &str, l: &'a Linear) {
    out.push((format!("{name}.weight"), l.weight.view().into_dyn()));
    out.push((format!("{name}.bias"), l.bias.view().into_dyn()));
}

fn push_norm<'a>(out: &mut Vec<(String, ArrayViewD<'a, f64>)>, name: &str, n: &'a LayerNorm) {
    out.push((format!("{name}.gamma"), n.gamma.view().into_dyn()));
    out.push((format!("{name}.beta"), n.beta.view().into_dyn()));
}

fn push_linear_mut<'a>(out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>, name: &str, l: &'a mut Linear) {
    out.push((format!("{name}.weight"), l.weight.view_mut().into_dyn()));
    out.push((format!("{name}.bias"), l.bias.view_mut().into_dyn()));
}

fn push_norm_mut<'a>(out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>, name: &str, n: &'a mut LayerNorm) {
    out.push((format!("{name}.gamma"), n.gamma.view_mut().into_dyn()));
    out.push((format!("{name}.beta"), n.beta.view_mut().into_dyn()));
}
