//! Hand-written backpropagation through the encoder.
//!
//! Gradients accumulate into a second [`ToyEncoderParams`] with identical
//! shapes. Three gradient sources can be injected per sequence: the masked
//! character logits, the post-final-layer-norm states (used by the CRF
//! head during fine-tuning), and a block output at an arbitrary layer (the
//! boundary regression). The finite-difference checker in this module's
//! sibling validates every formula here.

use ndarray::{s, Array1, Array2, Axis};

use super::forward::{gelu_prime, ForwardCache, LayerCache, LnCache};
use super::params::{LayerParams, ToyEncoderParams};
use super::ModelConfig;

/// Gradient sources attached to one sequence's forward cache.
#[derive(Default)]
pub(crate) struct SeqGrads {
    /// d loss / d logits.
    pub d_logits: Option<Array2<f64>>,
    /// d loss / d final_hidden (post final layer norm).
    pub d_final_hidden: Option<Array2<f64>>,
    /// (1-indexed layer, d loss / d hidden\[layer\]).
    pub d_hidden_at: Option<(usize, Array2<f64>)>,
}

/// Row-wise layer-norm backward. Returns `d x` and accumulates gain/bias
/// gradients.
fn layer_norm_backward(
    d_y: &Array2<f64>,
    cache: &LnCache,
    gain: &Array1<f64>,
    d_gain: &mut Array1<f64>,
    d_bias: &mut Array1<f64>,
) -> Array2<f64> {
    let (n, d) = d_y.dim();
    let mut d_x = Array2::zeros((n, d));
    for i in 0..n {
        let mut m1 = 0.0; // mean of d_xhat
        let mut m2 = 0.0; // mean of d_xhat * xhat
        for j in 0..d {
            let dxh = d_y[(i, j)] * gain[j];
            m1 += dxh;
            m2 += dxh * cache.xhat[(i, j)];
        }
        m1 /= d as f64;
        m2 /= d as f64;
        let inv_std = cache.inv_std[i];
        for j in 0..d {
            let dxh = d_y[(i, j)] * gain[j];
            d_x[(i, j)] = inv_std * (dxh - m1 - cache.xhat[(i, j)] * m2);
        }
    }
    for j in 0..d {
        let mut dg = 0.0;
        let mut db = 0.0;
        for i in 0..n {
            dg += d_y[(i, j)] * cache.xhat[(i, j)];
            db += d_y[(i, j)];
        }
        d_gain[j] += dg;
        d_bias[j] += db;
    }
    d_x
}

/// Softmax backward per row: `dS_i = A_i ⊙ (dA_i − ⟨dA_i, A_i⟩)`.
fn softmax_backward(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let (n, m) = probs.dim();
    let mut d_scores = Array2::zeros((n, m));
    for i in 0..n {
        let mut dot = 0.0;
        for j in 0..m {
            dot += d_probs[(i, j)] * probs[(i, j)];
        }
        for j in 0..m {
            d_scores[(i, j)] = probs[(i, j)] * (d_probs[(i, j)] - dot);
        }
    }
    d_scores
}

fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(0))
}

/// Backward through one block. `d_out` is the gradient at the block output;
/// returns the gradient at the block input.
fn block_backward(
    layer: &LayerParams,
    cache: &LayerCache,
    num_heads: usize,
    d_out: &Array2<f64>,
    grads: &mut LayerParams,
) -> Array2<f64> {
    let (n, d) = d_out.dim();
    let dk = d / num_heads;
    let scale = 1.0 / (dk as f64).sqrt();

    // x_out = x_mid + a1 · w2 + b2
    let d_ffn_out = d_out;
    let d_a1 = d_ffn_out.dot(&layer.w2.t());
    grads.w2 += &cache.a1.t().dot(d_ffn_out);
    grads.b2 += &column_sums(d_ffn_out);
    let mut d_h1 = d_a1;
    ndarray::Zip::from(&mut d_h1)
        .and(&cache.h1)
        .for_each(|g, &h| *g *= gelu_prime(h));
    grads.w1 += &cache.ln2_out.t().dot(&d_h1);
    grads.b1 += &column_sums(&d_h1);
    let d_ln2_out = d_h1.dot(&layer.w1.t());
    let d_from_ln2 = layer_norm_backward(
        &d_ln2_out,
        &cache.ln2,
        &layer.ln2_g,
        &mut grads.ln2_g,
        &mut grads.ln2_b,
    );
    let d_x_mid = d_out + &d_from_ln2;

    // x_mid = x_in + ctx · wo + bo
    let d_attn_out = &d_x_mid;
    let d_ctx = d_attn_out.dot(&layer.wo.t());
    grads.wo += &cache.ctx.t().dot(d_attn_out);
    grads.bo += &column_sums(d_attn_out);

    let mut d_q = Array2::zeros((n, d));
    let mut d_k = Array2::zeros((n, d));
    let mut d_v = Array2::zeros((n, d));
    for h in 0..num_heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let probs = &cache.attn[h];
        let d_ctxh = d_ctx.slice(cols);
        let vh = cache.v.slice(cols);
        let qh = cache.q.slice(cols);
        let kh = cache.k.slice(cols);

        let d_probs = d_ctxh.dot(&vh.t());
        d_v.slice_mut(cols).assign(&probs.t().dot(&d_ctxh));
        let mut d_scores = softmax_backward(probs, &d_probs);
        d_scores.mapv_inplace(|x| x * scale);
        d_q.slice_mut(cols).assign(&d_scores.dot(&kh));
        d_k.slice_mut(cols).assign(&d_scores.t().dot(&qh));
    }

    grads.wq += &cache.ln1_out.t().dot(&d_q);
    grads.bq += &column_sums(&d_q);
    grads.wk += &cache.ln1_out.t().dot(&d_k);
    grads.bk += &column_sums(&d_k);
    grads.wv += &cache.ln1_out.t().dot(&d_v);
    grads.bv += &column_sums(&d_v);

    let d_ln1_out = d_q.dot(&layer.wq.t()) + d_k.dot(&layer.wk.t()) + d_v.dot(&layer.wv.t());
    let d_from_ln1 = layer_norm_backward(
        &d_ln1_out,
        &cache.ln1,
        &layer.ln1_g,
        &mut grads.ln1_g,
        &mut grads.ln1_b,
    );
    d_x_mid + d_from_ln1
}

/// Accumulates one sequence's parameter gradients into `grads`.
pub(crate) fn backward_sequence(
    params: &ToyEncoderParams,
    config: &ModelConfig,
    cache: &ForwardCache,
    seq: SeqGrads,
    grads: &mut ToyEncoderParams,
) {
    let n = cache.ids.len();
    let d = config.d_model;

    // heads: logits = hf · w_mlm + b_mlm
    let mut d_hf = Array2::zeros((n, d));
    if let Some(d_logits) = &seq.d_logits {
        grads.w_mlm += &cache.hf.t().dot(d_logits);
        grads.b_mlm += &column_sums(d_logits);
        d_hf += &d_logits.dot(&params.w_mlm.t());
    }
    if let Some(extra) = &seq.d_final_hidden {
        d_hf += extra;
    }

    // final layer norm over hidden[num_layers]
    let mut d_x = layer_norm_backward(
        &d_hf,
        &cache.ln_f,
        &params.ln_f_g,
        &mut grads.ln_f_g,
        &mut grads.ln_f_b,
    );

    // blocks, top down; inject the boundary gradient when d_x represents
    // the corresponding block output
    for l in (0..config.num_layers).rev() {
        if let Some((layer, d_ba)) = &seq.d_hidden_at {
            if *layer == l + 1 {
                d_x += d_ba;
            }
        }
        d_x = block_backward(
            &params.layers[l],
            &cache.layers[l],
            config.num_heads,
            &d_x,
            &mut grads.layers[l],
        );
    }

    // embeddings: x0[i] = tok_emb[id_i] + pos_emb[i]
    for (i, &id) in cache.ids.iter().enumerate() {
        let mut tok_row = grads.tok_emb.row_mut(id as usize);
        tok_row += &d_x.row(i);
        let mut pos_row = grads.pos_emb.row_mut(i);
        pos_row += &d_x.row(i);
    }
}

