//! The pretraining loop: masked-character prediction plus boundary
//! regression, batched over a corpus with a seeded schedule.
//!
//! The schedule is a pure function of `(seed, step)`: each epoch's sentence
//! order is a seeded permutation, and batches walk it in sequence. Resuming
//! from a checkpointed step therefore reproduces the uninterrupted run
//! exactly.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::{encode_sentence, Normalizer};
use crate::corpus::CharSequence;
use crate::error::{Error, Result};
use crate::ngram::NgramDictionary;

use super::adam::AdamState;
use super::backward::{backward_sequence, SeqGrads};
use super::forward::forward_cached;
use super::loss::{
    boundary_loss_grad, boundary_loss_sum, mask_batch, mlm_loss_grad, LossReport, MaskedBatch,
};
use super::params::ToyEncoderParams;
use super::{ModelConfig, Vocab};

/// Knobs of one pretraining run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PretrainOptions {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub mask_rate: f64,
    pub seed: u64,
    /// `false` disables the boundary objective entirely (ablation); the
    /// reported `l_ba` is then exactly zero and `l_pre == l_mlm`.
    pub ba_enabled: bool,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            steps: 500,
            batch_size: 16,
            lr: 1e-3,
            mask_rate: 0.15,
            seed: 0,
            ba_enabled: true,
        }
    }
}

/// splitmix64; mixes the run seed with a step or epoch index so derived
/// streams are independent.
pub fn seed_for_step(seed: u64, step: u64) -> u64 {
    let mut z = seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed_for_step(seed, epoch ^ 0x5eed_0000_0000_0000));
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Sentence indices of batch `step`, walking seeded epoch permutations.
fn batch_indices(n: usize, batch_size: usize, seed: u64, step: usize) -> Vec<usize> {
    let start = step * batch_size;
    let mut out = Vec::with_capacity(batch_size);
    let mut cached: Option<(u64, Vec<usize>)> = None;
    for k in 0..batch_size {
        let g = start + k;
        let epoch = (g / n) as u64;
        let offset = g % n;
        let order = match &cached {
            Some((e, o)) if *e == epoch => o,
            _ => {
                cached = Some((epoch, epoch_order(n, seed, epoch)));
                &cached.as_ref().unwrap().1
            }
        };
        out.push(order[offset]);
    }
    out
}

/// Mutable training state: parameters plus optimizer moments.
pub struct TrainState {
    pub params: ToyEncoderParams,
    pub optimizer: AdamState,
}

impl TrainState {
    pub fn new(config: &ModelConfig) -> Self {
        let params = ToyEncoderParams::init(config);
        let optimizer = AdamState::new(&params);
        TrainState { params, optimizer }
    }
}

/// Boundary targets for one (unmasked, possibly truncated) sentence,
/// z-scored by the normalizer.
fn boundary_targets(
    dict: &NgramDictionary,
    normalizer: &Normalizer,
    sentence: &CharSequence,
    max_len: usize,
) -> Array2<f64> {
    let mut raw = encode_sentence(dict, sentence);
    if raw.nrows() > max_len {
        raw = raw.slice(ndarray::s![..max_len, ..]).to_owned();
    }
    let mut z = raw;
    normalizer.apply_in_place(&mut z);
    z
}

/// A masked batch with boundary targets resolved; the loss is a pure
/// function of `(params, PreparedBatch)`, which is what both the training
/// step and the gradient checker need.
pub(crate) struct PreparedBatch {
    pub masked: MaskedBatch,
    /// Per-sentence z-scored boundary targets; empty when the boundary
    /// objective is disabled.
    pub targets: Vec<Array2<f64>>,
    /// Per-sentence non-PAD masks for the boundary loss.
    pub counted: Vec<Vec<bool>>,
    pub ba_enabled: bool,
}

pub(crate) fn prepare_batch(
    config: &ModelConfig,
    dict: &NgramDictionary,
    normalizer: &Normalizer,
    batch: &[CharSequence],
    mask_rate: f64,
    mask_seed: u64,
    ba_enabled: bool,
) -> PreparedBatch {
    let masked = mask_batch(batch, config, mask_rate, mask_seed);
    let mut targets = Vec::new();
    let mut counted = Vec::new();
    if ba_enabled {
        for (sentence, ids) in batch.iter().zip(&masked.targets) {
            targets.push(boundary_targets(dict, normalizer, sentence, config.max_len));
            counted.push(ids.iter().map(|&id| id != Vocab::PAD).collect());
        }
    }
    PreparedBatch {
        masked,
        targets,
        counted,
        ba_enabled,
    }
}

/// Combined loss over a prepared batch, optionally accumulating gradients.
pub(crate) fn batch_loss(
    params: &ToyEncoderParams,
    config: &ModelConfig,
    prepared: &PreparedBatch,
    mut grads: Option<&mut ToyEncoderParams>,
) -> Result<LossReport> {
    let total_flagged = prepared.masked.num_flagged();
    let total_counted: usize = prepared
        .counted
        .iter()
        .map(|c| c.iter().filter(|&&b| b).count())
        .sum();

    let mut mlm_sum = 0.0;
    let mut ba_sum = 0.0;

    for (s, ids) in prepared.masked.inputs.iter().enumerate() {
        let cache = forward_cached(params, config, ids);
        let mut seq = SeqGrads::default();

        if total_flagged > 0 {
            if grads.is_some() {
                let (loss_sum, _, d_logits) = mlm_loss_grad(
                    cache.logits(),
                    &prepared.masked.targets[s],
                    &prepared.masked.flags[s],
                    1.0 / total_flagged as f64,
                );
                mlm_sum += loss_sum;
                seq.d_logits = Some(d_logits);
            } else {
                let (loss_sum, _) = super::loss::mlm_loss(
                    cache.logits(),
                    &prepared.masked.targets[s],
                    &prepared.masked.flags[s],
                );
                mlm_sum += loss_sum;
            }
        }

        if prepared.ba_enabled && total_counted > 0 {
            let hidden = cache.hidden(config.ba_layer);
            let (sum, _) =
                boundary_loss_sum(hidden, &params.w_b, &prepared.targets[s], &prepared.counted[s])?;
            ba_sum += sum;
            if let Some(g) = grads.as_deref_mut() {
                let d_hidden = boundary_loss_grad(
                    hidden,
                    &params.w_b,
                    &prepared.targets[s],
                    &prepared.counted[s],
                    1.0 / total_counted as f64,
                    &mut g.w_b,
                );
                seq.d_hidden_at = Some((config.ba_layer, d_hidden));
            }
        }

        if let Some(g) = grads.as_deref_mut() {
            backward_sequence(params, config, &cache, seq, g);
        }
    }

    let l_mlm = if total_flagged > 0 {
        mlm_sum / total_flagged as f64
    } else {
        0.0
    };
    let l_ba = if prepared.ba_enabled && total_counted > 0 {
        ba_sum / total_counted as f64
    } else {
        0.0
    };
    Ok(LossReport::new(l_mlm, l_ba))
}

/// One optimization step on a batch of sentences. Boundary targets come
/// from the original, unmasked characters; masked-loss positions are the
/// selected ones; boundary positions are every non-PAD position.
pub fn pretrain_step(
    state: &mut TrainState,
    config: &ModelConfig,
    dict: &NgramDictionary,
    normalizer: &Normalizer,
    batch: &[CharSequence],
    opts: &PretrainOptions,
    step: usize,
) -> Result<LossReport> {
    let prepared = prepare_batch(
        config,
        dict,
        normalizer,
        batch,
        opts.mask_rate,
        seed_for_step(opts.seed, step as u64),
        opts.ba_enabled,
    );
    let mut grads = ToyEncoderParams::zeros(config);
    let report = batch_loss(&state.params, config, &prepared, Some(&mut grads))?;
    if !report.is_finite() {
        return Err(Error::NonFiniteLoss {
            step,
            detail: format!("l_mlm={}, l_ba={}", report.l_mlm, report.l_ba),
        });
    }
    state.optimizer.update(&mut state.params, &grads, opts.lr);
    Ok(report)
}

/// Full pretraining run from a fresh initialization.
pub fn pretrain(
    corpus: &[CharSequence],
    config: &ModelConfig,
    dict: &NgramDictionary,
    normalizer: &Normalizer,
    opts: &PretrainOptions,
) -> Result<(TrainState, Vec<LossReport>)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("pretraining corpus".into()));
    }
    if normalizer.dim() != config.boundary_dim {
        return Err(Error::Shape {
            what: "normalizer dimension".into(),
            expected: vec![config.boundary_dim],
            got: vec![normalizer.dim()],
        });
    }
    let mut state = TrainState::new(config);
    let reports = resume_pretrain(&mut state, corpus, config, dict, normalizer, opts, 0)?;
    Ok((state, reports))
}

/// Continues a run from `start_step`; with the stored optimizer state this
/// reproduces the uninterrupted trajectory step for step.
pub fn resume_pretrain(
    state: &mut TrainState,
    corpus: &[CharSequence],
    config: &ModelConfig,
    dict: &NgramDictionary,
    normalizer: &Normalizer,
    opts: &PretrainOptions,
    start_step: usize,
) -> Result<Vec<LossReport>> {
    let mut reports = Vec::with_capacity(opts.steps.saturating_sub(start_step));
    for step in start_step..opts.steps {
        let idx = batch_indices(corpus.len(), opts.batch_size, opts.seed, step);
        let batch: Vec<CharSequence> = idx.iter().map(|&i| corpus[i].clone()).collect();
        let report = pretrain_step(state, config, dict, normalizer, &batch, opts, step)?;
        reports.push(report);
    }
    Ok(reports)
}
