//! Masking and the two pretraining losses.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::CharSequence;
use crate::error::{Error, Result};

use super::{ModelConfig, Vocab};

/// How the selected positions were corrupted. The random branch may redraw
/// the original character; these counts record the branch taken, not the
/// visible outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorruptionCounts {
    pub masked: usize,
    pub random: usize,
    pub unchanged: usize,
}

/// One masked batch: corrupted inputs, original ids as targets, and flags
/// marking the positions that count toward the masked-character loss.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedBatch {
    pub inputs: Vec<Vec<u32>>,
    pub targets: Vec<Vec<u32>>,
    pub flags: Vec<Vec<bool>>,
    pub corruption: CorruptionCounts,
    /// Sentences cut down to `max_len`.
    pub truncated: usize,
}

impl MaskedBatch {
    pub fn num_flagged(&self) -> usize {
        self.flags.iter().map(|f| f.iter().filter(|&&b| b).count()).sum()
    }

    pub fn num_positions(&self) -> usize {
        self.inputs.iter().map(|s| s.len()).sum()
    }
}

/// BERT-style masking: each position is selected with probability
/// `mask_rate`; a selected position becomes MASK with probability 0.8, a
/// random non-special character with 0.1, and stays unchanged with 0.1.
/// Deterministic per seed. Over-long sentences are truncated (counted in
/// the result).
pub fn mask_batch(
    sentences: &[CharSequence],
    config: &ModelConfig,
    mask_rate: f64,
    seed: u64,
) -> MaskedBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab_size = config.vocab.size() as u32;
    let num_chars = vocab_size - Vocab::NUM_SPECIALS;

    let mut inputs = Vec::with_capacity(sentences.len());
    let mut targets = Vec::with_capacity(sentences.len());
    let mut flags = Vec::with_capacity(sentences.len());
    let mut corruption = CorruptionCounts::default();
    let mut truncated = 0;

    for sentence in sentences {
        let (ids, cut) = config.encode_truncated(sentence);
        truncated += usize::from(cut);
        let mut input = ids.clone();
        let mut flag = vec![false; ids.len()];
        for (i, f) in flag.iter_mut().enumerate() {
            if rng.gen::<f64>() < mask_rate {
                *f = true;
                let roll = rng.gen::<f64>();
                if roll < 0.8 {
                    input[i] = Vocab::MASK;
                    corruption.masked += 1;
                } else if roll < 0.9 && num_chars > 0 {
                    input[i] = Vocab::NUM_SPECIALS + rng.gen_range(0..num_chars);
                    corruption.random += 1;
                } else {
                    corruption.unchanged += 1;
                }
            }
        }
        inputs.push(input);
        targets.push(ids);
        flags.push(flag);
    }

    MaskedBatch {
        inputs,
        targets,
        flags,
        corruption,
        truncated,
    }
}

/// Sum of cross-entropy over flagged positions of one sequence, plus the
/// flagged count. Batch-level means divide by the total count.
pub fn mlm_loss(logits: &Array2<f64>, targets: &[u32], flags: &[bool]) -> (f64, usize) {
    let (sum, count, _) = mlm_loss_grad_inner(logits, targets, flags, None);
    (sum, count)
}

/// As [`mlm_loss`], also producing `d logits` scaled by `grad_scale`
/// (typically `1 / total_flagged_in_batch`).
pub(crate) fn mlm_loss_grad(
    logits: &Array2<f64>,
    targets: &[u32],
    flags: &[bool],
    grad_scale: f64,
) -> (f64, usize, Array2<f64>) {
    let (sum, count, grad) = mlm_loss_grad_inner(logits, targets, flags, Some(grad_scale));
    (sum, count, grad.expect("grad requested"))
}

fn mlm_loss_grad_inner(
    logits: &Array2<f64>,
    targets: &[u32],
    flags: &[bool],
    grad_scale: Option<f64>,
) -> (f64, usize, Option<Array2<f64>>) {
    let (n, v) = logits.dim();
    assert_eq!(n, targets.len());
    assert_eq!(n, flags.len());

    let mut grad = grad_scale.map(|_| Array2::zeros((n, v)));
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..n {
        if !flags[i] {
            continue;
        }
        count += 1;
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let t = targets[i] as usize;
        sum += log_z - logits[(i, t)];
        if let (Some(g), Some(scale)) = (grad.as_mut(), grad_scale) {
            for j in 0..v {
                let p = (logits[(i, j)] - log_z).exp();
                g[(i, j)] = scale * p;
            }
            g[(i, t)] -= scale;
        }
    }
    (sum, count, grad)
}

/// Boundary regression loss: mean over counted positions of the mean
/// squared difference between `W_B · h_i` and the target row.
///
/// `counted[i] = false` excludes a position (PAD or padding rows).
pub fn boundary_loss(
    hidden: &Array2<f64>,
    w_b: &Array2<f64>,
    targets: &Array2<f64>,
    counted: &[bool],
) -> Result<f64> {
    let (sum, n) = boundary_loss_sum(hidden, w_b, targets, counted)?;
    if n == 0 {
        return Ok(0.0);
    }
    Ok(sum / n as f64)
}

/// Sum over counted positions of the per-position component-mean squared
/// error, plus the counted-position count.
pub(crate) fn boundary_loss_sum(
    hidden: &Array2<f64>,
    w_b: &Array2<f64>,
    targets: &Array2<f64>,
    counted: &[bool],
) -> Result<(f64, usize)> {
    let (n, d) = hidden.dim();
    let (d_e, d_w) = w_b.dim();
    if d_w != d {
        return Err(Error::Shape {
            what: "boundary projection".into(),
            expected: vec![d_e, d],
            got: vec![d_e, d_w],
        });
    }
    if targets.dim() != (n, d_e) {
        return Err(Error::Shape {
            what: "boundary targets".into(),
            expected: vec![n, d_e],
            got: targets.shape().to_vec(),
        });
    }
    if counted.len() != n {
        return Err(Error::Shape {
            what: "counted mask".into(),
            expected: vec![n],
            got: vec![counted.len()],
        });
    }

    let projected = hidden.dot(&w_b.t());
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..n {
        if !counted[i] {
            continue;
        }
        count += 1;
        let mut sq = 0.0;
        for j in 0..d_e {
            let r = projected[(i, j)] - targets[(i, j)];
            sq += r * r;
        }
        sum += sq / d_e as f64;
    }
    Ok((sum, count))
}

/// Gradients of the batch-mean boundary loss contribution of one sequence.
///
/// `grad_scale` is `1 / total_counted_in_batch`; returns `d hidden` and
/// accumulates into `d_w_b`.
pub(crate) fn boundary_loss_grad(
    hidden: &Array2<f64>,
    w_b: &Array2<f64>,
    targets: &Array2<f64>,
    counted: &[bool],
    grad_scale: f64,
    d_w_b: &mut Array2<f64>,
) -> Array2<f64> {
    let (n, _) = hidden.dim();
    let d_e = w_b.nrows();
    let mut residual = hidden.dot(&w_b.t()) - targets;
    for i in 0..n {
        if !counted[i] {
            residual.row_mut(i).fill(0.0);
        }
    }
    let coef = 2.0 * grad_scale / d_e as f64;
    let scaled = residual.mapv(|r| r * coef);
    *d_w_b += &scaled.t().dot(hidden);
    scaled.dot(w_b)
}

/// Loss breakdown of one pretraining step. The combined loss is the plain
/// sum of the two parts.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossReport {
    pub l_mlm: f64,
    pub l_ba: f64,
    pub l_pre: f64,
}

impl LossReport {
    pub fn new(l_mlm: f64, l_ba: f64) -> Self {
        LossReport {
            l_mlm,
            l_ba,
            l_pre: l_mlm + l_ba,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.l_mlm.is_finite() && self.l_ba.is_finite() && self.l_pre.is_finite()
    }
}
