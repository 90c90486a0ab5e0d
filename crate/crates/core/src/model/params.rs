//! Trainable tensors and their uniform enumeration.
//!
//! Every tensor is addressable by a stable name (`layer2.attn.wq`,
//! `head.w_mlm`, …). The optimizer, the checkpoint writer, and the gradient
//! checker all walk the same enumeration, so none of them can silently skip
//! a tensor.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;

/// Flat access to a tensor regardless of rank. All arrays are standard
/// layout, so the flat slice view always exists.
pub trait TensorLike {
    fn shape(&self) -> Vec<usize>;
    fn flat(&self) -> &[f64];
    fn flat_mut(&mut self) -> &mut [f64];
    fn len(&self) -> usize {
        self.flat().len()
    }
}

impl TensorLike for Array1<f64> {
    fn shape(&self) -> Vec<usize> {
        vec![self.len()]
    }
    fn flat(&self) -> &[f64] {
        self.as_slice().expect("standard layout")
    }
    fn flat_mut(&mut self) -> &mut [f64] {
        self.as_slice_mut().expect("standard layout")
    }
}

impl TensorLike for Array2<f64> {
    fn shape(&self) -> Vec<usize> {
        let (r, c) = self.dim();
        vec![r, c]
    }
    fn flat(&self) -> &[f64] {
        self.as_slice().expect("standard layout")
    }
    fn flat_mut(&mut self) -> &mut [f64] {
        self.as_slice_mut().expect("standard layout")
    }
}

/// One transformer block's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable tensors: embeddings, blocks, final layer norm, the masked
/// character head, and the boundary projection.
///
/// `w_b` maps a hidden state (`d_model`) into boundary space
/// (`boundary_dim`); gradients reuse this same struct with identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoderParams {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub ln_f_g: Array1<f64>,
    pub ln_f_b: Array1<f64>,
    pub w_mlm: Array2<f64>,
    pub b_mlm: Array1<f64>,
    pub w_b: Array2<f64>,
}

impl ToyEncoderParams {
    /// All-zero tensors with shapes from the config; the gradient
    /// accumulator.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let v = config.vocab.size();
        let f = config.ffn_dim;
        let layer = || LayerParams {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            wq: Array2::zeros((d, d)),
            bq: Array1::zeros(d),
            wk: Array2::zeros((d, d)),
            bk: Array1::zeros(d),
            wv: Array2::zeros((d, d)),
            bv: Array1::zeros(d),
            wo: Array2::zeros((d, d)),
            bo: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w1: Array2::zeros((d, f)),
            b1: Array1::zeros(f),
            w2: Array2::zeros((f, d)),
            b2: Array1::zeros(d),
        };
        ToyEncoderParams {
            tok_emb: Array2::zeros((v, d)),
            pos_emb: Array2::zeros((config.max_len, d)),
            layers: (0..config.num_layers).map(|_| layer()).collect(),
            ln_f_g: Array1::zeros(d),
            ln_f_b: Array1::zeros(d),
            w_mlm: Array2::zeros((d, v)),
            b_mlm: Array1::zeros(v),
            w_b: Array2::zeros((config.boundary_dim, d)),
        }
    }

    /// Seeded initialization: Xavier-uniform weight matrices, small uniform
    /// embeddings, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        fn fill_uniform(t: &mut Array2<f64>, limit: f64, rng: &mut ChaCha8Rng) {
            for x in t.flat_mut() {
                *x = rng.gen_range(-limit..limit);
            }
        }
        fn xavier(t: &mut Array2<f64>, rng: &mut ChaCha8Rng) {
            let (rows, cols) = t.dim();
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            fill_uniform(t, limit, rng);
        }

        fill_uniform(&mut p.tok_emb, 0.05, &mut rng);
        fill_uniform(&mut p.pos_emb, 0.05, &mut rng);
        for layer in &mut p.layers {
            layer.ln1_g.fill(1.0);
            layer.ln2_g.fill(1.0);
            xavier(&mut layer.wq, &mut rng);
            xavier(&mut layer.wk, &mut rng);
            xavier(&mut layer.wv, &mut rng);
            xavier(&mut layer.wo, &mut rng);
            xavier(&mut layer.w1, &mut rng);
            xavier(&mut layer.w2, &mut rng);
        }
        p.ln_f_g.fill(1.0);
        xavier(&mut p.w_mlm, &mut rng);
        xavier(&mut p.w_b, &mut rng);
        p
    }

    /// Stable names and shapes of every tensor, in declaration order.
    pub fn named_tensors(&self) -> Vec<(String, &dyn TensorLike)> {
        let mut out: Vec<(String, &dyn TensorLike)> = vec![
            ("tok_emb".into(), &self.tok_emb),
            ("pos_emb".into(), &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let pre = format!("layer{i}");
            out.push((format!("{pre}.ln1_g"), &l.ln1_g));
            out.push((format!("{pre}.ln1_b"), &l.ln1_b));
            out.push((format!("{pre}.attn.wq"), &l.wq));
            out.push((format!("{pre}.attn.bq"), &l.bq));
            out.push((format!("{pre}.attn.wk"), &l.wk));
            out.push((format!("{pre}.attn.bk"), &l.bk));
            out.push((format!("{pre}.attn.wv"), &l.wv));
            out.push((format!("{pre}.attn.bv"), &l.bv));
            out.push((format!("{pre}.attn.wo"), &l.wo));
            out.push((format!("{pre}.attn.bo"), &l.bo));
            out.push((format!("{pre}.ln2_g"), &l.ln2_g));
            out.push((format!("{pre}.ln2_b"), &l.ln2_b));
            out.push((format!("{pre}.ffn.w1"), &l.w1));
            out.push((format!("{pre}.ffn.b1"), &l.b1));
            out.push((format!("{pre}.ffn.w2"), &l.w2));
            out.push((format!("{pre}.ffn.b2"), &l.b2));
        }
        out.push(("ln_f_g".into(), &self.ln_f_g));
        out.push(("ln_f_b".into(), &self.ln_f_b));
        out.push(("head.w_mlm".into(), &self.w_mlm));
        out.push(("head.b_mlm".into(), &self.b_mlm));
        out.push(("head.w_b".into(), &self.w_b));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut dyn TensorLike)> {
        let mut out: Vec<(String, &mut dyn TensorLike)> = vec![
            ("tok_emb".into(), &mut self.tok_emb),
            ("pos_emb".into(), &mut self.pos_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let pre = format!("layer{i}");
            out.push((format!("{pre}.ln1_g"), &mut l.ln1_g));
            out.push((format!("{pre}.ln1_b"), &mut l.ln1_b));
            out.push((format!("{pre}.attn.wq"), &mut l.wq));
            out.push((format!("{pre}.attn.bq"), &mut l.bq));
            out.push((format!("{pre}.attn.wk"), &mut l.wk));
            out.push((format!("{pre}.attn.bk"), &mut l.bk));
            out.push((format!("{pre}.attn.wv"), &mut l.wv));
            out.push((format!("{pre}.attn.bv"), &mut l.bv));
            out.push((format!("{pre}.attn.wo"), &mut l.wo));
            out.push((format!("{pre}.attn.bo"), &mut l.bo));
            out.push((format!("{pre}.ln2_g"), &mut l.ln2_g));
            out.push((format!("{pre}.ln2_b"), &mut l.ln2_b));
            out.push((format!("{pre}.ffn.w1"), &mut l.w1));
            out.push((format!("{pre}.ffn.b1"), &mut l.b1));
            out.push((format!("{pre}.ffn.w2"), &mut l.w2));
            out.push((format!("{pre}.ffn.b2"), &mut l.b2));
        }
        out.push(("ln_f_g".into(), &mut self.ln_f_g));
        out.push(("ln_f_b".into(), &mut self.ln_f_b));
        out.push(("head.w_mlm".into(), &mut self.w_mlm));
        out.push(("head.b_mlm".into(), &mut self.b_mlm));
        out.push(("head.w_b".into(), &mut self.w_b));
        out
    }

    /// True when every entry of every tensor is finite.
    pub fn all_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.flat().iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Vocab;

    fn tiny_config() -> ModelConfig {
        let vocab = Vocab::from_chars(vec!['a', 'b', 'c']);
        let mut c = ModelConfig::new(vocab, 18, 42);
        c.d_model = 8;
        c.num_layers = 2;
        c.num_heads = 2;
        c.ffn_dim = 12;
        c.max_len = 16;
        c
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let c = tiny_config();
        let a = ToyEncoderParams::init(&c);
        let b = ToyEncoderParams::init(&c);
        assert_eq!(a, b);

        let mut c2 = c.clone();
        c2.seed = 43;
        let other = ToyEncoderParams::init(&c2);
        assert_ne!(a, other);
    }

    #[test]
    fn init_layout_and_shapes() {
        let c = tiny_config();
        let p = ToyEncoderParams::init(&c);
        assert_eq!(p.w_b.shape(), &[18, 8]);
        assert_eq!(p.tok_emb.shape(), &[6, 8]); // 3 chars + 3 specials
        assert_eq!(p.w_mlm.shape(), &[8, 6]);
        assert!(p.layers[0].ln1_g.iter().all(|&x| x == 1.0));
        assert!(p.layers[0].bq.iter().all(|&x| x == 0.0));
        assert!(p.all_finite());
    }

    #[test]
    fn default_w_b_shape_is_18_by_32() {
        let vocab = Vocab::from_chars(vec!['a']);
        let c = ModelConfig::new(vocab, 18, 0);
        let p = ToyEncoderParams::init(&c);
        assert_eq!(p.w_b.shape(), &[18, 32]);
    }

    #[test]
    fn named_tensors_cover_everything_once() {
        let c = tiny_config();
        let p = ToyEncoderParams::init(&c);
        let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
        let mut deduped = names.clone();
        deduped.sort();
        deduped.dedup();
        assert_eq!(deduped.len(), names.len(), "duplicate tensor names");
        // 2 embeddings + 2 layers x 16 + 2 final LN + 3 head tensors
        assert_eq!(names.len(), 2 + 2 * 16 + 2 + 3);
        assert!(names.contains(&"head.w_b".to_string()));
    }
}
