//! Finite-difference validation of the analytic gradients.
//!
//! Central differences of the combined pretraining loss are compared
//! against the backward pass for a sampled set of coordinates spanning
//! every parameter tensor. The relative-error rule falls back to an
//! absolute tolerance when both gradients are effectively zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::Normalizer;
use crate::corpus::CharSequence;
use crate::error::Result;
use crate::ngram::NgramDictionary;

use super::params::ToyEncoderParams;
use super::train::{batch_loss, prepare_batch, seed_for_step};
use super::ModelConfig;

/// Both-near-zero threshold below which comparison switches to absolute.
const ZERO_FALLBACK: f64 = 1e-7;

/// Outcome of one check run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// Worst error per tensor, in enumeration order.
    pub per_tensor: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Error between an analytic and a numeric derivative: relative when either
/// is meaningfully non-zero, otherwise absolute against `1e-7`.
pub fn grad_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    let diff = (analytic - numeric).abs();
    if denom < ZERO_FALLBACK {
        if diff <= ZERO_FALLBACK {
            0.0
        } else {
            diff / ZERO_FALLBACK
        }
    } else {
        diff / denom
    }
}

/// Compares a gradient set against central differences of `loss_fn` at a
/// sampled coordinate set covering every tensor. Exposed separately so a
/// fault-injection test can corrupt `analytic` and watch the checker catch
/// it.
pub fn max_error_against_numeric(
    params: &mut ToyEncoderParams,
    analytic: &ToyEncoderParams,
    loss_fn: &mut dyn FnMut(&ToyEncoderParams) -> f64,
    epsilon: f64,
    min_coords: usize,
    sample_seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);

    // sample coordinates per tensor, proportional to size, at least one each
    let sizes: Vec<(String, usize)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    let total: usize = sizes.iter().map(|(_, l)| l).sum();
    let coords: Vec<Vec<usize>> = sizes
        .iter()
        .map(|(_, len)| {
            let want = ((min_coords * len).div_ceil(total)).clamp(1, *len);
            if want == *len {
                (0..*len).collect()
            } else {
                let mut set = std::collections::BTreeSet::new();
                while set.len() < want {
                    set.insert(rng.gen_range(0..*len));
                }
                set.into_iter().collect()
            }
        })
        .collect();

    let analytic_flat: Vec<Vec<f64>> = analytic
        .named_tensors()
        .into_iter()
        .map(|(_, t)| t.flat().to_vec())
        .collect();

    let poke = |params: &mut ToyEncoderParams, tensor: usize, i: usize, v: f64| {
        let mut tensors = params.named_tensors_mut();
        tensors[tensor].1.flat_mut()[i] = v;
    };
    let peek = |params: &ToyEncoderParams, tensor: usize, i: usize| -> f64 {
        params.named_tensors()[tensor].1.flat()[i]
    };

    let mut per_tensor = Vec::with_capacity(coords.len());
    let mut max_err = 0.0f64;
    let mut checked = 0usize;

    for (tensor, idx) in coords.iter().enumerate() {
        let mut tensor_err = 0.0f64;
        for &i in idx {
            let original = peek(params, tensor, i);
            poke(params, tensor, i, original + epsilon);
            let plus = loss_fn(params);
            poke(params, tensor, i, original - epsilon);
            let minus = loss_fn(params);
            poke(params, tensor, i, original);

            let numeric = (plus - minus) / (2.0 * epsilon);
            let err = grad_error(analytic_flat[tensor][i], numeric);
            tensor_err = tensor_err.max(err);
            checked += 1;
        }
        max_err = max_err.max(tensor_err);
        per_tensor.push((sizes[tensor].0.clone(), tensor_err));
    }

    GradCheckReport {
        max_rel_error: max_err,
        coords_checked: checked,
        per_tensor,
    }
}

/// Full gradient check of the pretraining loss on a tiny batch: analytic
/// gradients from the backward pass vs central differences, covering at
/// least `min_coords` coordinates across every tensor.
pub fn gradient_check(
    config: &ModelConfig,
    dict: &NgramDictionary,
    normalizer: &Normalizer,
    batch: &[CharSequence],
    seed: u64,
    epsilon: f64,
    min_coords: usize,
) -> Result<GradCheckReport> {
    config.validate()?;
    let mut params = ToyEncoderParams::init(config);
    let prepared = prepare_batch(
        config,
        dict,
        normalizer,
        batch,
        0.3, // denser masking than training so the MLM path is well covered
        seed_for_step(seed, 0),
        true,
    );

    let mut grads = ToyEncoderParams::zeros(config);
    batch_loss(&params, config, &prepared, Some(&mut grads))?;

    let mut loss_fn = |p: &ToyEncoderParams| {
        batch_loss(p, config, &prepared, None)
            .expect("loss evaluation")
            .l_pre
    };
    Ok(max_error_against_numeric(
        &mut params,
        &grads,
        &mut loss_fn,
        epsilon,
        min_coords,
        seed_for_step(seed, 1),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::fit_normalizer;
    use crate::corpus::{normalize_sentence, SentenceStream};
    use crate::model::Vocab;
    use crate::ngram::{build_dictionary, ExtractorConfig};

    fn fixture() -> (ModelConfig, NgramDictionary, Normalizer, Vec<CharSequence>) {
        let lines: Vec<CharSequence> = (0..30)
            .map(|i| {
                normalize_sentence(
                    match i % 3 {
                        0 => "abcabd",
                        1 => "bdca",
                        _ => "cabdab",
                    },
                    false,
                )
                .unwrap()
            })
            .collect();
        let dict = build_dictionary(
            SentenceStream::from_sentences("gc", lines.clone()),
            &ExtractorConfig {
                max_n: 2,
                min_freq: 1,
            },
        )
        .unwrap();
        let norm = fit_normalizer(&dict, SentenceStream::from_sentences("gc", lines.clone()))
            .unwrap();
        let vocab = Vocab::from_corpus(lines.iter());
        let mut config = ModelConfig::new(vocab, 7, 3);
        config.d_model = 8;
        config.num_layers = 2;
        config.num_heads = 2;
        config.ffn_dim = 10;
        config.max_len = 8;
        config.ba_layer = 1;
        (config, dict, norm, lines)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (config, dict, norm, lines) = fixture();
        let report =
            gradient_check(&config, &dict, &norm, &lines[..3], 11, 1e-5, 220).unwrap();
        assert!(report.coords_checked >= 220);
        assert_eq!(report.per_tensor.len(), 2 + 2 * 16 + 2 + 3);
        assert!(
            report.max_rel_error <= 1e-4,
            "max rel error {}",
            report.max_rel_error
        );
    }

    #[test]
    fn fault_injection_is_detected() {
        let (config, dict, norm, lines) = fixture();
        let mut params = ToyEncoderParams::init(&config);
        let prepared = prepare_batch(&config, &dict, &norm, &lines[..2], 0.3, 5, true);
        let mut grads = ToyEncoderParams::zeros(&config);
        batch_loss(&params, &config, &prepared, Some(&mut grads)).unwrap();

        // corrupt one W_B gradient entry
        grads.w_b[(0, 0)] += 1.0;

        let mut loss_fn = |p: &ToyEncoderParams| {
            batch_loss(p, &config, &prepared, None).unwrap().l_pre
        };
        let report =
            max_error_against_numeric(&mut params, &grads, &mut loss_fn, 1e-5, 2000, 7);
        let wb_err = report
            .per_tensor
            .iter()
            .find(|(n, _)| n == "head.w_b")
            .unwrap()
            .1;
        assert!(wb_err > 1e-2, "corruption not detected: {wb_err}");
    }

    #[test]
    fn zero_grad_zero_numeric_passes() {
        assert_eq!(grad_error(0.0, 0.0), 0.0);
        assert_eq!(grad_error(5e-8, -4e-8), 0.0);
        // a genuinely missing gradient is flagged far above any tolerance
        assert!(grad_error(0.0, 1e-3) >= 1.0);
        assert!(grad_error(1.0, 1.0 + 1e-9) < 1e-8);
    }
}
