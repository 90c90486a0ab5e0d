//! End-to-end fine-tuning: encoder + CRF trained jointly on the sentence
//! negative log-likelihood, with per-epoch dev evaluation and best-dev
//! selection.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::Normalizer;
use crate::corpus::CharSequence;
use crate::error::{Error, Result};
use crate::model::{
    adam_step_slice, backward_sequence, forward_cached, seed_for_step, Checkpoint, CrfBundle,
    ModelConfig, SeqGrads, ToyEncoderParams,
};

use super::chain::{nll_grad, viterbi_decode_with, CrfModel};
use super::data::{LabeledDataset, SchemeKind, TagScheme};
use super::eval::{evaluate_f1, F1Score};

/// Fine-tuning knobs.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FineTuneOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Decode with the scheme's transition validity table instead of the
    /// unconstrained argmax.
    pub constrained_decode: bool,
}

impl Default for FineTuneOptions {
    fn default() -> Self {
        FineTuneOptions {
            epochs: 20,
            batch_size: 8,
            lr: 1e-3,
            seed: 0,
            constrained_decode: false,
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sentence negative log-likelihood over the training split.
    pub train_nll: f64,
    pub dev_f1: Option<F1Score>,
}

/// A fine-tuned encoder with its CRF head and tag inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct FineTunedModel {
    pub config: ModelConfig,
    pub params: ToyEncoderParams,
    pub crf: CrfModel,
    pub scheme: TagScheme,
    pub normalizer: Option<Normalizer>,
}

impl FineTunedModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            params: self.params.clone(),
            normalizer: self.normalizer.clone(),
            optimizer: None,
            crf: Some(CrfBundle {
                scheme: self.scheme.kind().name().to_string(),
                tags: self.scheme.tags().to_vec(),
                emission_w: self.crf.emission_w.clone(),
                emission_b: self.crf.emission_b.clone(),
                transitions: self.crf.transitions.clone(),
                start: self.crf.start.clone(),
                stop: self.crf.stop.clone(),
            }),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let bundle = ckpt.crf.ok_or_else(|| {
            Error::Config("checkpoint has no CRF head; run finetune first".into())
        })?;
        let kind = SchemeKind::parse(&bundle.scheme)?;
        Ok(FineTunedModel {
            config: ckpt.config,
            params: ckpt.params,
            crf: CrfModel {
                emission_w: bundle.emission_w,
                emission_b: bundle.emission_b,
                transitions: bundle.transitions,
                start: bundle.start,
                stop: bundle.stop,
            },
            scheme: TagScheme::from_parts(kind, bundle.tags),
            normalizer: ckpt.normalizer,
        })
    }
}

/// Adam moments for the five CRF tensors.
struct CrfAdam {
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl CrfAdam {
    fn new(model: &CrfModel) -> Self {
        let sizes = [
            model.emission_w.len(),
            model.emission_b.len(),
            model.transitions.len(),
            model.start.len(),
            model.stop.len(),
        ];
        CrfAdam {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn update(&mut self, model: &mut CrfModel, grads: &CrfGrads, lr: f64) {
        self.step += 1;
        let tensors: [(&mut [f64], &[f64]); 5] = [
            (
                model.emission_w.as_slice_mut().unwrap(),
                grads.emission_w.as_slice().unwrap(),
            ),
            (
                model.emission_b.as_slice_mut().unwrap(),
                grads.emission_b.as_slice().unwrap(),
            ),
            (
                model.transitions.as_slice_mut().unwrap(),
                grads.transitions.as_slice().unwrap(),
            ),
            (
                model.start.as_slice_mut().unwrap(),
                grads.start.as_slice().unwrap(),
            ),
            (
                model.stop.as_slice_mut().unwrap(),
                grads.stop.as_slice().unwrap(),
            ),
        ];
        for (i, (theta, g)) in tensors.into_iter().enumerate() {
            adam_step_slice(theta, g, &mut self.m[i], &mut self.v[i], self.step, lr);
        }
    }
}

struct CrfGrads {
    emission_w: Array2<f64>,
    emission_b: Array1<f64>,
    transitions: Array2<f64>,
    start: Array1<f64>,
    stop: Array1<f64>,
}

impl CrfGrads {
    fn zeros(model: &CrfModel) -> Self {
        CrfGrads {
            emission_w: Array2::zeros(model.emission_w.dim()),
            emission_b: Array1::zeros(model.emission_b.len()),
            transitions: Array2::zeros(model.transitions.dim()),
            start: Array1::zeros(model.start.len()),
            stop: Array1::zeros(model.stop.len()),
        }
    }
}

/// An encoded training sentence: character ids and tag ids, both truncated
/// to `max_len` together.
struct EncodedSentence {
    ids: Vec<u32>,
    tags: Vec<usize>,
}

fn encode_dataset(
    dataset: &LabeledDataset,
    config: &ModelConfig,
    scheme: &TagScheme,
) -> Result<Vec<EncodedSentence>> {
    dataset
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (ids, _) = config.encode_truncated(&s.text);
            let mut tags = scheme.encode_tags(&s.tags, i)?;
            tags.truncate(ids.len());
            Ok(EncodedSentence { ids, tags })
        })
        .collect()
}

/// Tags one sentence with a fine-tuned model. Sentences longer than
/// `max_len` are labeled in consecutive chunks.
pub fn label_sentence(
    model: &FineTunedModel,
    sentence: &CharSequence,
    constrained: bool,
) -> Vec<String> {
    let constraints = constrained.then_some(&model.scheme);
    let mut out = Vec::with_capacity(sentence.len());
    for chunk in sentence.chars().chunks(model.config.max_len) {
        let ids: Vec<u32> = chunk.iter().map(|&c| model.config.vocab.id_of(c)).collect();
        let cache = forward_cached(&model.params, &model.config, &ids);
        let emissions = model.crf.emissions(cache.final_hidden());
        let path = viterbi_decode_with(&emissions, &model.crf, constraints);
        out.extend(path.into_iter().map(|t| model.scheme.tags()[t].clone()));
    }
    out
}

fn dev_score(
    model_params: &ToyEncoderParams,
    crf: &CrfModel,
    config: &ModelConfig,
    scheme: &TagScheme,
    dev: &LabeledDataset,
    constrained: bool,
) -> Result<F1Score> {
    let constraints = constrained.then_some(scheme);
    let mut predictions = Vec::with_capacity(dev.len());
    let mut gold = Vec::with_capacity(dev.len());
    for s in &dev.sentences {
        let mut pred = Vec::with_capacity(s.text.len());
        for chunk in s.text.chars().chunks(config.max_len) {
            let ids: Vec<u32> = chunk.iter().map(|&c| config.vocab.id_of(c)).collect();
            let cache = forward_cached(model_params, config, &ids);
            let emissions = crf.emissions(cache.final_hidden());
            let path = viterbi_decode_with(&emissions, crf, constraints);
            pred.extend(path.into_iter().map(|t| scheme.tags()[t].clone()));
        }
        predictions.push(pred);
        gold.push(s.tags.clone());
    }
    evaluate_f1(&predictions, &gold, scheme)
}

/// Fine-tunes a pretrained checkpoint on a labeled dataset, minimizing the
/// sentence NLL end-to-end through the encoder. Deterministic per seed;
/// returns the best-dev model (the final model when no dev split is given)
/// and per-epoch metrics.
pub fn fine_tune(
    checkpoint: &Checkpoint,
    train: &LabeledDataset,
    dev: Option<&LabeledDataset>,
    kind: SchemeKind,
    opts: &FineTuneOptions,
) -> Result<(FineTunedModel, Vec<EpochMetrics>)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("fine-tuning training set".into()));
    }
    let config = checkpoint.config.clone();
    config.validate()?;
    let scheme = TagScheme::for_dataset(kind, train)?;
    let encoded = encode_dataset(train, &config, &scheme)?;

    let mut params = checkpoint.params.clone();
    let mut crf = CrfModel::new(config.d_model, scheme.num_tags(), seed_for_step(opts.seed, 0x0c5f));
    let mut enc_adam = crate::model::AdamState::new(&params);
    let mut crf_adam = CrfAdam::new(&crf);

    let mut best: Option<(f64, ToyEncoderParams, CrfModel)> = None;
    let mut metrics = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        // seeded shuffle
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed_for_step(opts.seed, epoch as u64));
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut nll_total = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut enc_grads = ToyEncoderParams::zeros(&config);
            let mut crf_grads = CrfGrads::zeros(&crf);

            for &si in batch {
                let sent = &encoded[si];
                let cache = forward_cached(&params, &config, &sent.ids);
                let hf = cache.final_hidden();
                let emissions = crf.emissions(hf);
                let (nll, g) = nll_grad(&emissions, &crf, &sent.tags, scale);
                nll_total += nll;

                crf_grads.emission_w += &hf.t().dot(&g.d_emissions);
                crf_grads.emission_b += &g.d_emissions.sum_axis(Axis(0));
                crf_grads.transitions += &g.d_transitions;
                crf_grads.start += &g.d_start;
                crf_grads.stop += &g.d_stop;

                let d_hf = g.d_emissions.dot(&crf.emission_w.t());
                backward_sequence(
                    &params,
                    &config,
                    &cache,
                    SeqGrads {
                        d_final_hidden: Some(d_hf),
                        ..Default::default()
                    },
                    &mut enc_grads,
                );
            }

            enc_adam.update(&mut params, &enc_grads, opts.lr);
            crf_adam.update(&mut crf, &crf_grads, opts.lr);
        }
        let train_nll = nll_total / encoded.len() as f64;
        if !train_nll.is_finite() {
            return Err(Error::NonFiniteLoss {
                step: epoch,
                detail: format!("fine-tune epoch NLL {train_nll}"),
            });
        }

        let dev_f1 = match dev {
            Some(d) => {
                let score =
                    dev_score(&params, &crf, &config, &scheme, d, opts.constrained_decode)?;
                // strictly-better keeps the earliest best epoch on ties
                if best.as_ref().map_or(true, |(b, _, _)| score.f1 > *b) {
                    best = Some((score.f1, params.clone(), crf.clone()));
                }
                Some(score)
            }
            None => None,
        };

        metrics.push(EpochMetrics {
            epoch,
            train_nll,
            dev_f1,
        });
    }

    let (final_params, final_crf) = match best {
        Some((_, p, c)) => (p, c),
        None => (params, crf),
    };
    Ok((
        FineTunedModel {
            config,
            params: final_params,
            crf: final_crf,
            scheme,
            normalizer: checkpoint.normalizer.clone(),
        },
        metrics,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SyntheticSpec};
    use crate::crf::data::bmes_tags_for_words;
    use crate::model::Vocab;

    fn labeled_fixture(num: usize, seed: u64) -> LabeledDataset {
        let spec = SyntheticSpec {
            lexicon: vec![
                ("ab".into(), 1.0),
                ("cde".into(), 1.0),
                ("f".into(), 1.0),
                ("ghi".into(), 1.0),
            ],
            sentence_length_range: (2, 4),
            num_sentences: num,
            seed,
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        let pairs = corpus
            .sentences
            .into_iter()
            .zip(corpus.gold.iter().map(|w| bmes_tags_for_words(w)))
            .collect();
        LabeledDataset::from_pairs(pairs).unwrap()
    }

    fn base_checkpoint(train: &LabeledDataset) -> Checkpoint {
        let vocab = Vocab::from_corpus(train.sentences.iter().map(|s| &s.text));
        let mut config = ModelConfig::new(vocab, 7, 31);
        config.d_model = 16;
        config.num_layers = 2;
        config.num_heads = 2;
        config.ffn_dim = 24;
        config.max_len = 32;
        let params = ToyEncoderParams::init(&config);
        Checkpoint {
            config,
            params,
            normalizer: None,
            optimizer: None,
            crf: None,
        }
    }

    #[test]
    fn lr_zero_gives_constant_metrics() {
        let train = labeled_fixture(8, 1);
        let dev = labeled_fixture(4, 2);
        let ckpt = base_checkpoint(&train);
        let opts = FineTuneOptions {
            epochs: 3,
            lr: 0.0,
            ..Default::default()
        };
        let (_, metrics) =
            fine_tune(&ckpt, &train, Some(&dev), SchemeKind::Bmes, &opts).unwrap();
        let f1s: Vec<f64> = metrics.iter().map(|m| m.dev_f1.unwrap().f1).collect();
        assert!(f1s.windows(2).all(|w| w[0] == w[1]), "{f1s:?}");
        let nlls: Vec<f64> = metrics.iter().map(|m| m.train_nll).collect();
        assert!(nlls.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12), "{nlls:?}");
    }

    #[test]
    fn same_seed_same_trajectory() {
        let train = labeled_fixture(10, 3);
        let dev = labeled_fixture(5, 4);
        let ckpt = base_checkpoint(&train);
        let opts = FineTuneOptions {
            epochs: 3,
            lr: 5e-3,
            seed: 11,
            ..Default::default()
        };
        let (m1, r1) = fine_tune(&ckpt, &train, Some(&dev), SchemeKind::Bmes, &opts).unwrap();
        let (m2, r2) = fine_tune(&ckpt, &train, Some(&dev), SchemeKind::Bmes, &opts).unwrap();
        assert_eq!(m1.params, m2.params);
        assert_eq!(m1.crf, m2.crf);
        let f1: Vec<f64> = r1.iter().map(|m| m.dev_f1.unwrap().f1).collect();
        let f2: Vec<f64> = r2.iter().map(|m| m.dev_f1.unwrap().f1).collect();
        assert_eq!(f1, f2);
    }

    #[test]
    fn overfits_ten_sentences_to_perfect_train_f1() {
        let train = labeled_fixture(10, 5);
        let ckpt = base_checkpoint(&train);
        let opts = FineTuneOptions {
            epochs: 50,
            batch_size: 4,
            lr: 5e-3,
            seed: 1,
            constrained_decode: false,
        };
        // use the training set as dev so best-dev selection watches train F1
        let (model, metrics) =
            fine_tune(&ckpt, &train, Some(&train), SchemeKind::Bmes, &opts).unwrap();
        let best = metrics
            .iter()
            .filter_map(|m| m.dev_f1.map(|f| f.f1))
            .fold(0.0f64, f64::max);
        assert!(
            (best - 1.0).abs() < 1e-12,
            "train F1 {best} after {} epochs",
            opts.epochs
        );
        // the returned model is the best one
        let score = dev_score(
            &model.params,
            &model.crf,
            &model.config,
            &model.scheme,
            &train,
            false,
        )
        .unwrap();
        assert_eq!(score.f1, 1.0);
    }

    #[test]
    fn empty_dataset_is_error() {
        let train = LabeledDataset::default();
        let ckpt = base_checkpoint(&labeled_fixture(2, 9));
        let err = fine_tune(
            &ckpt,
            &train,
            None,
            SchemeKind::Bmes,
            &FineTuneOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }

    #[test]
    fn checkpoint_round_trip_preserves_model() {
        let train = labeled_fixture(6, 7);
        let ckpt = base_checkpoint(&train);
        let opts = FineTuneOptions {
            epochs: 2,
            lr: 1e-3,
            ..Default::default()
        };
        let (model, _) = fine_tune(&ckpt, &train, None, SchemeKind::Bmes, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ft.ckpt");
        crate::model::save_checkpoint(&model.to_checkpoint(), &path).unwrap();
        let loaded = FineTunedModel::from_checkpoint(crate::model::load_checkpoint(&path).unwrap())
            .unwrap();
        assert_eq!(model, loaded);

        // labeling works and covers every character
        let s = &train.sentences[0].text;
        let tags = label_sentence(&loaded, s, false);
        assert_eq!(tags.len(), s.len());
    }

    #[test]
    fn unknown_characters_map_to_unk_and_still_label() {
        let train = labeled_fixture(6, 8);
        let ckpt = base_checkpoint(&train);
        let opts = FineTuneOptions {
            epochs: 1,
            ..Default::default()
        };
        let (model, _) = fine_tune(&ckpt, &train, None, SchemeKind::Bmes, &opts).unwrap();
        let s = crate::corpus::normalize_sentence("zzqq", false).unwrap();
        let tags = label_sentence(&model, &s, false);
        assert_eq!(tags.len(), 4);
    }
}
