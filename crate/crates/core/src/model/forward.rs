//! Forward pass with cached intermediates for backpropagation.
//!
//! Sequences are processed one at a time at their true length, so no
//! attention padding mask is needed and a batch-of-one is bit-identical to
//! the same sequence inside a larger batch.

use ndarray::{s, Array1, Array2};

use super::params::{LayerParams, ToyEncoderParams};
use super::ModelConfig;

pub(crate) const LN_EPS: f64 = 1e-5;

/// Row-wise layer norm cache: normalized rows and per-row 1/σ.
#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

pub(crate) fn layer_norm(
    x: &Array2<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
) -> (Array2<f64>, LnCache) {
    let (n, d) = x.dim();
    let mut xhat = Array2::zeros((n, d));
    let mut inv_std = Array1::zeros(n);
    let mut y = Array2::zeros((n, d));
    for i in 0..n {
        let row = x.row(i);
        let mean = row.sum() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for j in 0..d {
            let xh = (x[(i, j)] - mean) * is;
            xhat[(i, j)] = xh;
            y[(i, j)] = xh * gain[j] + bias[j];
        }
    }
    (y, LnCache { xhat, inv_std })
}

pub(crate) fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

// tanh-approximate GELU; the backward pass differentiates the same
// approximation, so the two stay consistent.
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Intermediates of one block, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub ln1: LnCache,
    pub ln1_out: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// Per-head attention probabilities, each `n × n`.
    pub attn: Vec<Array2<f64>>,
    /// Concatenated per-head context, `n × d`, before the output
    /// projection.
    pub ctx: Array2<f64>,
    pub ln2: LnCache,
    pub ln2_out: Array2<f64>,
    /// FFN pre-activation.
    pub h1: Array2<f64>,
    /// FFN activation output.
    pub a1: Array2<f64>,
}

/// Full forward record for one sequence.
pub struct ForwardCache {
    pub(crate) ids: Vec<u32>,
    /// `hidden[0]` is the embedding sum; `hidden[l]` the output of block
    /// `l` (1-indexed).
    pub(crate) hidden: Vec<Array2<f64>>,
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) ln_f: LnCache,
    /// Post-final-layer-norm states feeding the output heads.
    pub(crate) hf: Array2<f64>,
    pub(crate) logits: Array2<f64>,
}

impl ForwardCache {
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Output of block `layer` (1-indexed); `0` is the embedding sum.
    pub fn hidden(&self, layer: usize) -> &Array2<f64> {
        &self.hidden[layer]
    }

    /// Head input: final hidden states after the last layer norm.
    pub fn final_hidden(&self) -> &Array2<f64> {
        &self.hf
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }
}

/// Per-layer hidden states plus masked-character logits.
pub struct HiddenStates {
    /// `layers[l]` is the output of block `l`; index 0 holds the embedding
    /// sum.
    pub layers: Vec<Array2<f64>>,
    /// Final hidden states after the output layer norm.
    pub final_hidden: Array2<f64>,
    pub logits: Array2<f64>,
}

fn attention(layer: &LayerParams, ln1_out: &Array2<f64>, num_heads: usize) -> AttnOut {
    let (n, d) = ln1_out.dim();
    let dk = d / num_heads;
    let scale = 1.0 / (dk as f64).sqrt();

    let q = ln1_out.dot(&layer.wq) + &layer.bq;
    let k = ln1_out.dot(&layer.wk) + &layer.bk;
    let v = ln1_out.dot(&layer.wv) + &layer.bv;

    let mut attn = Vec::with_capacity(num_heads);
    let mut ctx = Array2::zeros((n, d));
    for h in 0..num_heads {
        let cols = s![.., h * dk..(h + 1) * dk];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut scores = qh.dot(&kh.t());
        scores.mapv_inplace(|x| x * scale);
        softmax_rows(&mut scores);
        let ctxh = scores.dot(&vh);
        ctx.slice_mut(cols).assign(&ctxh);
        attn.push(scores);
    }
    AttnOut { q, k, v, attn, ctx }
}

struct AttnOut {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

/// Runs the encoder on one id sequence, keeping every intermediate.
pub fn forward_cached(params: &ToyEncoderParams, config: &ModelConfig, ids: &[u32]) -> ForwardCache {
    assert!(!ids.is_empty(), "empty sequence");
    assert!(
        ids.len() <= config.max_len,
        "sequence length {} exceeds max_len {}",
        ids.len(),
        config.max_len
    );
    let vocab_size = config.vocab.size() as u32;
    assert!(
        ids.iter().all(|&id| id < vocab_size),
        "id outside vocabulary"
    );

    let n = ids.len();
    let d = config.d_model;
    let mut x = Array2::zeros((n, d));
    for (i, &id) in ids.iter().enumerate() {
        let row = &params.tok_emb.row(id as usize) + &params.pos_emb.row(i);
        x.row_mut(i).assign(&row);
    }

    let mut hidden = Vec::with_capacity(config.num_layers + 1);
    hidden.push(x.clone());
    let mut layer_caches = Vec::with_capacity(config.num_layers);

    for layer in &params.layers {
        let x_in = x;
        let (ln1_out, ln1) = layer_norm(&x_in, &layer.ln1_g, &layer.ln1_b);
        let att = attention(layer, &ln1_out, config.num_heads);
        let attn_out = att.ctx.dot(&layer.wo) + &layer.bo;
        let x_mid = &x_in + &attn_out;

        let (ln2_out, ln2) = layer_norm(&x_mid, &layer.ln2_g, &layer.ln2_b);
        let h1 = ln2_out.dot(&layer.w1) + &layer.b1;
        let a1 = h1.mapv(gelu);
        let ffn_out = a1.dot(&layer.w2) + &layer.b2;
        let x_out = &x_mid + &ffn_out;

        layer_caches.push(LayerCache {
            ln1,
            ln1_out,
            q: att.q,
            k: att.k,
            v: att.v,
            attn: att.attn,
            ctx: att.ctx,
            ln2,
            ln2_out,
            h1,
            a1,
        });
        hidden.push(x_out.clone());
        x = x_out;
    }

    let (hf, ln_f) = layer_norm(&x, &params.ln_f_g, &params.ln_f_b);
    let logits = hf.dot(&params.w_mlm) + &params.b_mlm;

    ForwardCache {
        ids: ids.to_vec(),
        hidden,
        layers: layer_caches,
        ln_f,
        hf,
        logits,
    }
}

/// Forward pass returning hidden states and logits only.
pub fn forward(params: &ToyEncoderParams, config: &ModelConfig, ids: &[u32]) -> HiddenStates {
    let cache = forward_cached(params, config, ids);
    HiddenStates {
        layers: cache.hidden,
        final_hidden: cache.hf,
        logits: cache.logits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vocab;

    fn tiny() -> (ModelConfig, ToyEncoderParams) {
        let vocab = Vocab::from_chars(vec!['a', 'b', 'c', 'd']);
        let mut c = ModelConfig::new(vocab, 7, 11);
        c.d_model = 8;
        c.num_layers = 2;
        c.num_heads = 2;
        c.ffn_dim = 12;
        c.max_len = 16;
        let p = ToyEncoderParams::init(&c);
        (c, p)
    }

    #[test]
    fn outputs_are_finite_even_for_all_pad() {
        let (c, p) = tiny();
        let out = forward(&p, &c, &[Vocab::PAD, Vocab::PAD, Vocab::PAD]);
        assert!(out.logits.iter().all(|x| x.is_finite()));
        assert!(out.final_hidden.iter().all(|x| x.is_finite()));
        for h in &out.layers {
            assert!(h.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn position_embeddings_break_permutation_symmetry() {
        let (c, p) = tiny();
        let a = forward(&p, &c, &[3, 4, 5]);
        let b = forward(&p, &c, &[4, 3, 5]);
        assert_ne!(a.logits, b.logits);
    }

    #[test]
    fn forward_is_deterministic() {
        let (c, p) = tiny();
        let a = forward(&p, &c, &[3, 4, 5, 6]);
        let b = forward(&p, &c, &[3, 4, 5, 6]);
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.final_hidden, b.final_hidden);
    }

    #[test]
    fn hidden_layout_matches_config() {
        let (c, p) = tiny();
        let out = forward(&p, &c, &[3, 4]);
        assert_eq!(out.layers.len(), c.num_layers + 1);
        for h in &out.layers {
            assert_eq!(h.dim(), (2, c.d_model));
        }
        assert_eq!(out.logits.dim(), (2, c.vocab.size()));
    }

    #[test]
    fn softmax_rows_normalize() {
        let mut m = ndarray::array![[1.0, 2.0, 3.0], [-1.0, 0.0, 1000.0]];
        softmax_rows(&mut m);
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn gelu_prime_matches_numeric_derivative() {
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.5, 2.0, 4.0] {
            let eps = 1e-6;
            let numeric = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert!(
                (gelu_prime(x) - numeric).abs() < 1e-8,
                "x={x}: {} vs {}",
                gelu_prime(x),
                numeric
            );
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = ndarray::array![[1.0, 2.0, 3.0, 4.0], [10.0, 10.0, 10.0, 10.0]];
        let g = Array1::ones(4);
        let b = Array1::zeros(4);
        let (y, _) = layer_norm(&x, &g, &b);
        let r0: Vec<f64> = y.row(0).to_vec();
        let mean: f64 = r0.iter().sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        // constant row normalizes to zeros thanks to epsilon
        assert!(y.row(1).iter().all(|&v| v == 0.0));
    }
}
