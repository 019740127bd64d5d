//! Forward and backward passes of the pre-norm encoder for one (padded)
//! sequence. Gradients are accumulated into a [`Parameters`]-shaped buffer.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::params::{Block, LayerNorm, Linear, Parameters};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

pub(crate) struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, ln: &LayerNorm) -> (Array2<f64>, NormCache) {
    let dim = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / dim;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / dim;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        let k = *inv;
        row.mapv_inplace(|v| v * k);
    }
    let y = &xhat * &ln.gamma + &ln.beta;
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_backward(dy: &Array2<f64>, cache: &NormCache, ln: &LayerNorm, grad: &mut LayerNorm) -> Array2<f64> {
    grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
    grad.beta += &dy.sum_axis(Axis(0));
    let dim = dy.ncols() as f64;
    let mut dx = dy * &ln.gamma;
    for ((mut row, xhat), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / dim;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(d, x)| d * x).sum::<f64>() / dim;
        Zip::from(&mut row)
            .and(&xhat)
            .for_each(|d, &x| *d = inv * (*d - mean_d - x * mean_dx));
    }
    dx
}

fn linear(x: &ArrayView2<f64>, l: &Linear) -> Array2<f64> {
    x.dot(&l.weight) + &l.bias
}

fn linear_backward(x: &ArrayView2<f64>, dy: &Array2<f64>, l: &Linear, grad: &mut Linear) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), dy, 1.0, &mut grad.weight);
    grad.bias += &dy.sum_axis(Axis(0));
    dy.dot(&l.weight.t())
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

/// Inverted-dropout mask: entries are 0 or 1/(1-p).
fn dropout_mask<R: Rng>(rng: &mut R, rows: usize, cols: usize, p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

pub(crate) struct BlockCache {
    attn_norm: NormCache,
    normed_attn: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    pub(crate) probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    ffn_norm: NormCache,
    normed_ffn: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ffn_drop: Option<Array2<f64>>,
}

/// Everything the backward pass needs from one forward pass.
pub(crate) struct SequenceCache {
    ids: Vec<u32>,
    embed_drop: Option<Array2<f64>>,
    pub(crate) blocks: Vec<BlockCache>,
    final_norm: NormCache,
    cls_drop: Option<Array1<f64>>,
}

pub(crate) struct Dropout<'a, R: Rng> {
    pub rng: &'a mut R,
    pub p: f64,
}

/// Runs the encoder over `ids` (already padded); keys at positions
/// `>= valid` are masked out of attention. Returns the final hidden state of
/// the first position after head dropout.
pub(crate) fn forward_sequence<R: Rng>(
    params: &Parameters,
    heads: usize,
    ids: &[u32],
    valid: usize,
    mut dropout: Option<Dropout<'_, R>>,
) -> (Array1<f64>, SequenceCache) {
    let enc = &params.encoder;
    let len = ids.len();
    let hidden = enc.token_embedding.ncols();
    let head_dim = hidden / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let mut x = Array2::zeros((len, hidden));
    for (t, &id) in ids.iter().enumerate() {
        let mut row = x.row_mut(t);
        row.assign(&enc.token_embedding.row(id as usize));
        row += &enc.position_embedding.row(t);
    }
    let mut mask_for = |rows: usize, cols: usize| {
        dropout
            .as_mut()
            .filter(|d| d.p > 0.0)
            .map(|d| dropout_mask(d.rng, rows, cols, d.p))
    };
    let embed_drop = mask_for(len, hidden);
    if let Some(m) = &embed_drop {
        x *= m;
    }

    let mut caches = Vec::with_capacity(enc.blocks.len());
    for block in &enc.blocks {
        let (normed_attn, attn_norm) = layer_norm(&x, &block.attn_norm);
        let q = linear(&normed_attn.view(), &block.query);
        let k = linear(&normed_attn.view(), &block.key);
        let v = linear(&normed_attn.view(), &block.value);
        let mut ctx = Array2::zeros((len, hidden));
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * head_dim..(h + 1) * head_dim];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores *= scale;
            masked_softmax_rows(&mut scores, valid);
            ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let mut attn = linear(&ctx.view(), &block.attn_out);
        let attn_drop = mask_for(len, hidden);
        if let Some(m) = &attn_drop {
            attn *= m;
        }
        x += &attn;

        let (normed_ffn, ffn_norm) = layer_norm(&x, &block.ffn_norm);
        let pre_act = linear(&normed_ffn.view(), &block.ffn_in);
        let act = pre_act.mapv(gelu);
        let mut out = linear(&act.view(), &block.ffn_out);
        let ffn_drop = mask_for(len, hidden);
        if let Some(m) = &ffn_drop {
            out *= m;
        }
        x += &out;

        caches.push(BlockCache {
            attn_norm,
            normed_attn,
            q,
            k,
            v,
            probs,
            ctx,
            attn_drop,
            ffn_norm,
            normed_ffn,
            pre_act,
            act,
            ffn_drop,
        });
    }

    let (z, final_norm) = layer_norm(&x, &enc.final_norm);
    let mut cls = z.row(0).to_owned();
    let cls_drop = mask_for(1, hidden).map(|m| m.row(0).to_owned());
    if let Some(m) = &cls_drop {
        cls *= m;
    }
    (
        cls,
        SequenceCache {
            ids: ids.to_vec(),
            embed_drop,
            blocks: caches,
            final_norm,
            cls_drop,
        },
    )
}

fn masked_softmax_rows(scores: &mut Array2<f64>, valid: usize) {
    for mut row in scores.rows_mut() {
        let max = row.slice(s![..valid]).fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut sum = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            if j < valid {
                *v = (*v - max).exp();
                sum += *v;
            } else {
                *v = 0.0;
            }
        }
        row.mapv_inplace(|v| v / sum);
    }
}

/// Backpropagates `d_cls` (gradient w.r.t. the returned CLS vector) through
/// the encoder, accumulating into `grads`.
pub(crate) fn backward_sequence(
    params: &Parameters,
    heads: usize,
    cache: &SequenceCache,
    d_cls: &Array1<f64>,
    grads: &mut Parameters,
) {
    let enc = &params.encoder;
    let genc = &mut grads.encoder;
    let len = cache.ids.len();
    let hidden = enc.token_embedding.ncols();
    let head_dim = hidden / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let mut dz = Array2::zeros((len, hidden));
    match &cache.cls_drop {
        Some(m) => dz.row_mut(0).assign(&(d_cls * m)),
        None => dz.row_mut(0).assign(d_cls),
    }
    let mut dx = layer_norm_backward(&dz, &cache.final_norm, &enc.final_norm, &mut genc.final_norm);

    for ((block, bc), gblock) in enc.blocks.iter().zip(&cache.blocks).zip(genc.blocks.iter_mut()).rev() {
        dx = block_backward(block, bc, gblock, dx, heads, head_dim, scale);
    }

    if let Some(m) = &cache.embed_drop {
        dx *= m;
    }
    for (t, &id) in cache.ids.iter().enumerate() {
        let row = dx.row(t);
        let mut tok = genc.token_embedding.row_mut(id as usize);
        tok += &row;
        let mut pos = genc.position_embedding.row_mut(t);
        pos += &row;
    }
}

fn block_backward(
    block: &Block,
    bc: &BlockCache,
    g: &mut Block,
    dx: Array2<f64>,
    heads: usize,
    head_dim: usize,
    scale: f64,
) -> Array2<f64> {
    // Feed-forward residual branch.
    let mut d_out = dx.clone();
    if let Some(m) = &bc.ffn_drop {
        d_out *= m;
    }
    let d_act = linear_backward(&bc.act.view(), &d_out, &block.ffn_out, &mut g.ffn_out);
    let d_pre = &d_act * &bc.pre_act.mapv(gelu_grad);
    let d_normed = linear_backward(&bc.normed_ffn.view(), &d_pre, &block.ffn_in, &mut g.ffn_in);
    let dx_mid = dx + layer_norm_backward(&d_normed, &bc.ffn_norm, &block.ffn_norm, &mut g.ffn_norm);

    // Attention residual branch.
    let mut d_attn = dx_mid.clone();
    if let Some(m) = &bc.attn_drop {
        d_attn *= m;
    }
    let d_ctx = linear_backward(&bc.ctx.view(), &d_attn, &block.attn_out, &mut g.attn_out);
    let shape = bc.q.raw_dim();
    let mut dq = Array2::zeros(shape);
    let mut dk = Array2::zeros(shape);
    let mut dv = Array2::zeros(shape);
    for h in 0..heads {
        let cols = s![.., h * head_dim..(h + 1) * head_dim];
        let p = &bc.probs[h];
        let d_ctx_h = d_ctx.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&d_ctx_h));
        let dp = d_ctx_h.dot(&bc.v.slice(cols).t());
        let mut ds = &dp * p;
        let row_dot = ds.sum_axis(Axis(1));
        for ((mut ds_row, p_row), dot) in ds.rows_mut().into_iter().zip(p.rows()).zip(row_dot.iter()) {
            ds_row.scaled_add(-dot, &p_row);
        }
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&bc.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&bc.q.slice(cols)));
    }
    let normed = bc.normed_attn.view();
    let mut d_normed = linear_backward(&normed, &dq, &block.query, &mut g.query);
    d_normed += &linear_backward(&normed, &dk, &block.key, &mut g.key);
    d_normed += &linear_backward(&normed, &dv, &block.value, &mut g.value);
    dx_mid + layer_norm_backward(&d_normed, &bc.attn_norm, &block.attn_norm, &mut g.attn_norm)
}
