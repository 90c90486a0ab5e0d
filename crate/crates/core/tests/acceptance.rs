//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line. Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use babound::boundary::{boundary_dim, encode_character, fit_normalizer, pmi_vector};
use babound::corpus::{
    generate_synthetic_corpus, normalize_sentence, CharSequence, SentenceStream, SyntheticSpec,
};
use babound::crf::{
    bmes_tags_for_words, crf_log_likelihood, fine_tune, label_sentence, log_partition,
    path_score, viterbi_decode, CrfModel, FineTuneOptions, LabeledDataset, SchemeKind,
};
use babound::model::{
    gradient_check, load_checkpoint, pretrain, save_checkpoint, Checkpoint, ModelConfig,
    PretrainOptions, Vocab,
};
use babound::ngram::{
    build_dictionary, count_ngrams_with_threads, load_dictionary, save_dictionary, DictFormat,
    DictMeta, ExtractorConfig, NgramDictionary, NgramEntry,
};

use common::{mean_std, naive_adjacency, naive_count, naive_entropy, rel_close};

fn check(number: u32, name: &str, body: impl FnOnce() + std::panic::UnwindSafe) {
    let result = catch_unwind(AssertUnwindSafe(body));
    match &result {
        Ok(()) => println!("[ACCEPTANCE {number}] {name}: PASS"),
        Err(_) => println!("[ACCEPTANCE {number}] {name}: FAIL"),
    }
    if let Err(e) = result {
        resume_unwind(e);
    }
}

fn stream_of(sentences: &[CharSequence]) -> SentenceStream {
    SentenceStream::from_sentences("acceptance", sentences.to_vec())
}

fn random_corpus(rng: &mut ChaCha8Rng, alphabet: usize, max_chars: usize) -> Vec<CharSequence> {
    let mut sentences = Vec::new();
    let mut used = 0usize;
    while used < max_chars {
        let len = rng.gen_range(1..=30).min(max_chars - used);
        let chars: Vec<char> = (0..len)
            .map(|_| (b'a' + rng.gen_range(0..alphabet as u8)) as char)
            .collect();
        used += len;
        sentences.push(CharSequence::new(chars).unwrap());
    }
    sentences
}

/// Random multi-character lexicon over the ASCII letters; shared by the
/// boundary-signal and end-to-end criteria.
fn make_lexicon(seed: u64, n_words: usize) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words = std::collections::BTreeSet::new();
    while words.len() < n_words {
        let len = rng.gen_range(2..=4);
        let w: String = (0..len)
            .map(|_| (b'a' + rng.gen_range(0..26u8)) as char)
            .collect();
        words.insert(w);
    }
    words
        .into_iter()
        .map(|w| {
            let weight = 0.5 + rng.gen::<f64>();
            (w, weight)
        })
        .collect()
}

#[test]
fn criterion_01_counting_oracle() {
    check(1, "counting oracle on 50 random corpora", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0DE);
        for case in 0..50 {
            let alphabet = rng.gen_range(2..=20);
            let max_chars = rng.gen_range(100..=10_000);
            let max_n = rng.gen_range(1..=4);
            let sentences = random_corpus(&mut rng, alphabet, max_chars);

            let config = ExtractorConfig { max_n, min_freq: 1 };
            let threads = 1 + (case % 4);
            let counts =
                count_ngrams_with_threads(stream_of(&sentences), &config, threads).unwrap();
            let naive = naive_count(&sentences, max_n + 1);

            assert_eq!(counts.total_chars(), naive.total_chars, "case {case}: T");
            for len in 1..=max_n + 1 {
                let fast: BTreeMap<String, u64> = counts
                    .grams_of_len(len)
                    .map(|(g, c)| (g.to_string(), c))
                    .collect();
                assert_eq!(fast, naive.by_len[len - 1], "case {case}, len {len}");
            }
        }
        let elapsed = started.elapsed();
        assert!(
            elapsed.as_secs() < 60,
            "counting oracle suite took {elapsed:?}, budget 60 s"
        );
    });
}

#[test]
fn criterion_02_statistics_oracle() {
    check(2, "PMI/LE/RE direct-formula oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x57A7);
        for case in 0..10 {
            let alphabet = rng.gen_range(3..=12);
            let sentences = random_corpus(&mut rng, alphabet, 5_000);
            let config = ExtractorConfig {
                max_n: 3,
                min_freq: rng.gen_range(1..=3),
            };
            let dict = build_dictionary(stream_of(&sentences), &config).unwrap();
            let naive = naive_count(&sentences, config.max_n + 1);

            for (gram, entry) in dict.entries() {
                let oracle_pmi = naive.pmi(gram).expect("retained gram observed");
                assert!(
                    rel_close(entry.pmi, oracle_pmi, 1e-12),
                    "case {case} gram {gram:?}: pmi {} vs {}",
                    entry.pmi,
                    oracle_pmi
                );
                if gram.chars().count() == 1 {
                    assert_eq!(entry.pmi, 1.0, "case {case} unigram {gram:?}");
                }

                let (left, right) = naive_adjacency(&sentences, gram);
                let oracle_le = naive_entropy(&left);
                let oracle_re = naive_entropy(&right);
                assert!(
                    rel_close(entry.le, oracle_le, 1e-12),
                    "case {case} gram {gram:?}: le {} vs {}",
                    entry.le,
                    oracle_le
                );
                assert!(
                    rel_close(entry.re, oracle_re, 1e-12),
                    "case {case} gram {gram:?}: re {} vs {}",
                    entry.re,
                    oracle_re
                );
                assert!(entry.le >= 0.0 && entry.le <= (left.len().max(1) as f64).ln() + 1e-12);
                assert!(entry.re >= 0.0 && entry.re <= (right.len().max(1) as f64).ln() + 1e-12);
            }
        }
    });
}

#[test]
fn criterion_03_hand_case() {
    check(3, "hand case: PMI(ab) = PMI(abc) = 3 on abcabcabc", || {
        let sentences = vec![normalize_sentence("abcabcabc", false).unwrap()];
        let dict = build_dictionary(
            stream_of(&sentences),
            &ExtractorConfig {
                max_n: 3,
                min_freq: 1,
            },
        )
        .unwrap();
        assert_eq!(dict.get("ab").unwrap().pmi, 3.0);
        assert_eq!(dict.get("abc").unwrap().pmi, 3.0);
    });
}

#[test]
fn criterion_04_boundary_vector_conformance() {
    check(4, "boundary vector dimension, slot order, sharded build", || {
        assert_eq!(boundary_dim(4), 18);
        assert_eq!(boundary_dim(1), 3);

        // Figure-3 style slot addressing for 长 in 南京市长江大桥, N = 3
        let grams = [
            ("长", 10.0),
            ("长江", 20.0),
            ("市长", 30.0),
            ("长江大", 40.0),
            ("市长江", 50.0),
            ("京市长", 60.0),
        ];
        let entries = grams
            .iter()
            .map(|(g, pmi)| {
                (
                    g.to_string(),
                    NgramEntry {
                        count: 1,
                        pmi: *pmi,
                        le: 0.0,
                        re: 0.0,
                    },
                )
            })
            .collect();
        let dict = NgramDictionary::from_parts(
            ExtractorConfig {
                max_n: 3,
                min_freq: 1,
            },
            DictMeta {
                total_chars: 0,
                corpus: "figure3".into(),
            },
            entries,
        );
        let s = normalize_sentence("南京市长江大桥", false).unwrap();
        assert_eq!(
            pmi_vector(&dict, &s, 3),
            vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0]
        );
        let v = encode_character(&dict, &s, 3);
        assert_eq!(v.dim(), boundary_dim(3));

        // sharded and single-pass builds are identical, bit for bit
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let sentences = random_corpus(&mut rng, 8, 20_000);
        let config = ExtractorConfig {
            max_n: 3,
            min_freq: 2,
        };
        let single = {
            let counts = count_ngrams_with_threads(stream_of(&sentences), &config, 1).unwrap();
            babound::ngram::build_dictionary_from_counts(&counts, &config, "x".into()).unwrap()
        };
        for threads in [2, 5, 9] {
            let counts =
                count_ngrams_with_threads(stream_of(&sentences), &config, threads).unwrap();
            let sharded =
                babound::ngram::build_dictionary_from_counts(&counts, &config, "x".into())
                    .unwrap();
            assert_eq!(single, sharded, "threads = {threads}");
            for (g, e) in single.entries() {
                let o = sharded.get(g).unwrap();
                assert_eq!(e.pmi.to_bits(), o.pmi.to_bits(), "gram {g}");
                assert_eq!(e.le.to_bits(), o.le.to_bits(), "gram {g}");
                assert_eq!(e.re.to_bits(), o.re.to_bits(), "gram {g}");
            }
        }
    });
}

#[test]
fn criterion_05_boundary_signal() {
    check(5, "boundary signal on 200k-char synthetic corpora", || {
        let started = Instant::now();
        let mut pmi_gaps = Vec::new();
        let mut re_gaps = Vec::new();

        for seed in 0..5u64 {
            let lexicon = make_lexicon(100 + seed, 50);
            let spec = SyntheticSpec {
                lexicon,
                sentence_length_range: (3, 8),
                num_sentences: 13_000,
                seed,
            };
            let corpus = generate_synthetic_corpus(&spec).unwrap();
            let total: usize = corpus.sentences.iter().map(|s| s.len()).sum();
            assert!(total >= 200_000, "seed {seed}: corpus only {total} chars");

            let dict = build_dictionary(
                corpus.stream("signal"),
                &ExtractorConfig {
                    max_n: 2,
                    min_freq: 5,
                },
            )
            .unwrap();

            let mut intra = (0.0f64, 0usize);
            let mut cross = (0.0f64, 0usize);
            let mut re_final = (0.0f64, 0usize);
            let mut re_internal = (0.0f64, 0usize);

            for (sentence, words) in corpus.sentences.iter().zip(&corpus.gold) {
                let chars = sentence.chars();
                // word-final character positions
                let mut finals = vec![false; chars.len()];
                let mut pos = 0usize;
                for w in words {
                    pos += w.chars().count();
                    finals[pos - 1] = true;
                }
                for i in 0..chars.len() {
                    if let Some(e) = dict.get(&chars[i].to_string()) {
                        if finals[i] {
                            re_final.0 += e.re;
                            re_final.1 += 1;
                        } else {
                            re_internal.0 += e.re;
                            re_internal.1 += 1;
                        }
                    }
                    if i + 1 < chars.len() {
                        let bigram: String = chars[i..i + 2].iter().collect();
                        if let Some(e) = dict.get(&bigram) {
                            if finals[i] {
                                cross.0 += e.pmi;
                                cross.1 += 1;
                            } else {
                                intra.0 += e.pmi;
                                intra.1 += 1;
                            }
                        }
                    }
                }
            }

            let mean_intra = intra.0 / intra.1 as f64;
            let mean_cross = cross.0 / cross.1 as f64;
            let mean_final = re_final.0 / re_final.1 as f64;
            let mean_internal = re_internal.0 / re_internal.1 as f64;
            pmi_gaps.push(mean_intra - mean_cross);
            re_gaps.push(mean_final - mean_internal);
        }

        let (pmi_mean, pmi_std) = mean_std(&pmi_gaps);
        let (re_mean, re_std) = mean_std(&re_gaps);
        println!(
            "  boundary signal: PMI gap {pmi_mean:.3} (sd {pmi_std:.3}), RE gap {re_mean:.3} (sd {re_std:.3})"
        );
        assert!(
            pmi_mean > 0.0 && pmi_mean >= 2.0 * pmi_std,
            "intra/cross PMI gap {pmi_mean} not 2 sigma above 0 (sd {pmi_std})"
        );
        assert!(
            re_mean > 0.0 && re_mean >= 2.0 * re_std,
            "final/internal RE gap {re_mean} not 2 sigma above 0 (sd {re_std})"
        );

        let elapsed = started.elapsed();
        assert!(
            elapsed.as_secs() < 120,
            "boundary-signal suite took {elapsed:?}, budget 2 min"
        );
    });
}

fn gradcheck_fixture() -> (ModelConfig, NgramDictionary, babound::boundary::Normalizer, Vec<CharSequence>) {
    let lexicon = make_lexicon(7, 12);
    let spec = SyntheticSpec {
        lexicon,
        sentence_length_range: (2, 4),
        num_sentences: 50,
        seed: 7,
    };
    let corpus = generate_synthetic_corpus(&spec).unwrap();
    let dict = build_dictionary(
        corpus.stream("gradcheck"),
        &ExtractorConfig {
            max_n: 2,
            min_freq: 1,
        },
    )
    .unwrap();
    let normalizer = fit_normalizer(&dict, corpus.stream("gradcheck")).unwrap();
    let vocab = Vocab::from_corpus(corpus.sentences.iter());
    let mut config = ModelConfig::new(vocab, boundary_dim(2), 7);
    config.d_model = 16;
    config.num_layers = 2;
    config.num_heads = 2;
    config.ffn_dim = 24;
    config.max_len = 16;
    config.ba_layer = 1;
    (config, dict, normalizer, corpus.sentences)
}

#[test]
fn criterion_06_gradient_check() {
    check(6, "analytic vs finite-difference gradients of l_pre", || {
        let started = Instant::now();
        let (config, dict, normalizer, sentences) = gradcheck_fixture();
        let report = gradient_check(
            &config,
            &dict,
            &normalizer,
            &sentences[..4],
            13,
            1e-5,
            250,
        )
        .unwrap();

        // every tensor covered, including the boundary projection
        let expected_tensors = 2 + config.num_layers * 16 + 2 + 3;
        assert_eq!(report.per_tensor.len(), expected_tensors);
        assert!(report.per_tensor.iter().any(|(n, _)| n == "head.w_b"));
        assert!(report.coords_checked >= 200);
        println!(
            "  gradcheck: max rel error {:.3e} over {} coords",
            report.max_rel_error, report.coords_checked
        );
        assert!(
            report.max_rel_error <= 1e-4,
            "max rel error {}",
            report.max_rel_error
        );
        assert!(started.elapsed().as_secs() < 120, "gradcheck over budget");
    });
}

#[test]
fn criterion_07_loss_additivity_and_overfit() {
    check(7, "l_pre = l_mlm + l_ba; 500 steps reduce l_ba 10x", || {
        let lexicon = make_lexicon(21, 10);
        let spec = SyntheticSpec {
            lexicon,
            sentence_length_range: (2, 5),
            num_sentences: 20,
            seed: 21,
        };
        let corpus = generate_synthetic_corpus(&spec).unwrap();
        let dict = build_dictionary(
            corpus.stream("overfit"),
            &ExtractorConfig {
                max_n: 2,
                min_freq: 1,
            },
        )
        .unwrap();
        let normalizer = fit_normalizer(&dict, corpus.stream("overfit")).unwrap();
        let vocab = Vocab::from_corpus(corpus.sentences.iter());
        let mut config = ModelConfig::new(vocab, boundary_dim(2), 3);
        config.d_model = 48;
        config.num_layers = 2;
        config.num_heads = 2;
        config.ffn_dim = 64;
        config.max_len = 32;

        let opts = PretrainOptions {
            steps: 500,
            batch_size: 20,
            lr: 5e-3,
            mask_rate: 0.15,
            seed: 5,
            ba_enabled: true,
        };
        let (_, reports) = pretrain(&corpus.sentences, &config, &dict, &normalizer, &opts).unwrap();
        assert_eq!(reports.len(), 500);
        for (i, r) in reports.iter().enumerate() {
            assert_eq!(r.l_pre, r.l_mlm + r.l_ba, "step {i}: additivity");
        }
        let initial = reports[0].l_ba;
        let last = reports.last().unwrap().l_ba;
        println!("  overfit: l_ba {initial:.4} -> {last:.4}");
        assert!(
            last * 10.0 <= initial,
            "l_ba reduced only {initial} -> {last}"
        );
    });
}

#[test]
fn criterion_08_crf_oracles() {
    check(8, "CRF forward and Viterbi vs exhaustive enumeration", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xCF);
        for case in 0..100 {
            let n = rng.gen_range(1..=6);
            let t = rng.gen_range(2..=4);
            let emissions =
                ndarray::Array2::from_shape_fn((n, t), |_| rng.gen_range(-2.0..2.0));
            let mut model = CrfModel::new(4, t, case);
            model.transitions =
                ndarray::Array2::from_shape_fn((t, t), |_| rng.gen_range(-1.0..1.0));
            model.start = ndarray::Array1::from_shape_fn(t, |_| rng.gen_range(-1.0..1.0));
            model.stop = ndarray::Array1::from_shape_fn(t, |_| rng.gen_range(-1.0..1.0));

            // enumerate all t^n paths
            let mut paths: Vec<Vec<usize>> = vec![vec![]];
            for _ in 0..n {
                paths = paths
                    .iter()
                    .flat_map(|p| {
                        (0..t).map(|y| {
                            let mut q = p.clone();
                            q.push(y);
                            q
                        })
                    })
                    .collect();
            }
            let scores: Vec<f64> = paths
                .iter()
                .map(|p| path_score(&emissions, &model, p))
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let brute_log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();

            let log_z = log_partition(&emissions, &model);
            assert!(
                (log_z - brute_log_z).abs() <= 1e-10 * brute_log_z.abs().max(1.0),
                "case {case}: logZ {log_z} vs {brute_log_z}"
            );

            let decoded = viterbi_decode(&emissions, &model);
            let decoded_score = path_score(&emissions, &model, &decoded);
            let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (decoded_score - best).abs() < 1e-10,
                "case {case}: viterbi {decoded_score} vs {best}"
            );

            let total_prob: f64 = paths
                .iter()
                .map(|p| crf_log_likelihood(&emissions, &model, p).exp())
                .sum();
            assert!(
                (total_prob - 1.0).abs() < 1e-10,
                "case {case}: probabilities sum to {total_prob}"
            );
        }
    });
}

#[test]
fn criterion_09_directional_end_to_end() {
    check(9, "boundary-aware pretraining >= MLM-only on dev F1", || {
        let started = Instant::now();
        let lexicon = make_lexicon(999, 50);

        let pretrain_spec = |seed: u64| SyntheticSpec {
            lexicon: lexicon.clone(),
            sentence_length_range: (2, 6),
            num_sentences: 2_000,
            seed: 0xAAAA + seed,
        };
        let labeled = |seed: u64, n: usize| {
            let spec = SyntheticSpec {
                lexicon: lexicon.clone(),
                sentence_length_range: (2, 6),
                num_sentences: n,
                seed,
            };
            let corpus = generate_synthetic_corpus(&spec).unwrap();
            let pairs: Vec<(CharSequence, Vec<String>)> = corpus
                .sentences
                .into_iter()
                .zip(corpus.gold.iter().map(|w| bmes_tags_for_words(w)))
                .collect();
            LabeledDataset::from_pairs(pairs).unwrap()
        };

        let mut f1_ba = Vec::new();
        let mut f1_mlm = Vec::new();

        for seed in 0..5u64 {
            let corpus = generate_synthetic_corpus(&pretrain_spec(seed)).unwrap();
            let dict = build_dictionary(
                corpus.stream("e2e"),
                &ExtractorConfig {
                    max_n: 4,
                    min_freq: 5,
                },
            )
            .unwrap();
            let normalizer = fit_normalizer(&dict, corpus.stream("e2e")).unwrap();
            let vocab = Vocab::from_corpus(corpus.sentences.iter());
            let mut config = ModelConfig::new(vocab, boundary_dim(4), seed);
            config.d_model = 32;
            config.num_layers = 2;
            config.num_heads = 2;
            config.ffn_dim = 48;
            config.max_len = 48;
            config.ba_layer = 1;

            let train = labeled(0xBBBB + seed, 200);
            let dev = labeled(0xCCCC + seed, 100);

            for ba_enabled in [true, false] {
                let opts = PretrainOptions {
                    steps: 400,
                    batch_size: 16,
                    lr: 1e-3,
                    mask_rate: 0.15,
                    seed,
                    ba_enabled,
                };
                let (state, _) =
                    pretrain(&corpus.sentences, &config, &dict, &normalizer, &opts).unwrap();
                let checkpoint = Checkpoint {
                    config: config.clone(),
                    params: state.params,
                    normalizer: Some(normalizer.clone()),
                    optimizer: None,
                    crf: None,
                };
                let ft_opts = FineTuneOptions {
                    epochs: 6,
                    batch_size: 8,
                    lr: 3e-3,
                    seed,
                    constrained_decode: false,
                };
                let (_, metrics) =
                    fine_tune(&checkpoint, &train, Some(&dev), SchemeKind::Bmes, &ft_opts)
                        .unwrap();
                let best = metrics
                    .iter()
                    .filter_map(|m| m.dev_f1.map(|f| f.f1))
                    .fold(0.0f64, f64::max);
                if ba_enabled {
                    f1_ba.push(best);
                } else {
                    f1_mlm.push(best);
                }
            }
        }

        let mean_ba: f64 = f1_ba.iter().sum::<f64>() / f1_ba.len() as f64;
        let mean_mlm: f64 = f1_mlm.iter().sum::<f64>() / f1_mlm.len() as f64;
        println!("  end-to-end: BA {f1_ba:.3?} (mean {mean_ba:.4}) vs MLM-only {f1_mlm:.3?} (mean {mean_mlm:.4})");
        assert!(
            mean_ba >= mean_mlm,
            "mean dev F1 with boundary objective {mean_ba} < MLM-only {mean_mlm}"
        );
        let elapsed = started.elapsed();
        println!("  end-to-end wall time: {elapsed:?}");
        assert!(
            elapsed.as_secs() < 30 * 60,
            "end-to-end suite took {elapsed:?}, budget 30 min"
        );
    });
}

#[test]
fn criterion_10_persistence() {
    check(10, "bit-exact round trips and cross-format conversion", || {
        // dictionary: build, round-trip both formats, convert across
        let mut rng = ChaCha8Rng::seed_from_u64(0xD1C7);
        let sentences = random_corpus(&mut rng, 10, 30_000);
        let dict = build_dictionary(
            stream_of(&sentences),
            &ExtractorConfig {
                max_n: 3,
                min_freq: 3,
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();

        let jsonl = dir.path().join("d.jsonl");
        let binary = dir.path().join("d.bast");
        save_dictionary(&dict, &jsonl, DictFormat::Jsonl).unwrap();
        let from_jsonl = load_dictionary(&jsonl).unwrap();
        assert_eq!(dict, from_jsonl, "jsonl round trip");

        save_dictionary(&from_jsonl, &binary, DictFormat::Binary).unwrap();
        let from_binary = load_dictionary(&binary).unwrap();
        assert_eq!(dict, from_binary, "jsonl -> binary conversion");
        for (g, e) in dict.entries() {
            let o = from_binary.get(g).unwrap();
            assert_eq!(e.count, o.count);
            assert_eq!(e.pmi.to_bits(), o.pmi.to_bits(), "gram {g:?} pmi bits");
            assert_eq!(e.le.to_bits(), o.le.to_bits(), "gram {g:?} le bits");
            assert_eq!(e.re.to_bits(), o.re.to_bits(), "gram {g:?} re bits");
        }
        // and back again
        let jsonl2 = dir.path().join("d2.jsonl");
        save_dictionary(&from_binary, &jsonl2, DictFormat::Jsonl).unwrap();
        assert_eq!(
            std::fs::read(&jsonl).unwrap(),
            std::fs::read(&jsonl2).unwrap(),
            "canonical jsonl bytes identical after format round trip"
        );

        // checkpoint: pretrain briefly, save with optimizer state, reload
        let (config, dict2, normalizer, corpus) = gradcheck_fixture();
        let opts = PretrainOptions {
            steps: 5,
            batch_size: 4,
            lr: 1e-3,
            mask_rate: 0.15,
            seed: 3,
            ba_enabled: true,
        };
        let (state, _) = pretrain(&corpus, &config, &dict2, &normalizer, &opts).unwrap();
        let ckpt = Checkpoint {
            config,
            params: state.params,
            normalizer: Some(normalizer),
            optimizer: Some(state.optimizer),
            crf: None,
        };
        let cpath = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &cpath).unwrap();
        let loaded = load_checkpoint(&cpath).unwrap();
        assert_eq!(ckpt, loaded, "checkpoint round trip");

        // fine-tuned model with CRF head round-trips too
        let train_data = {
            let lexicon = make_lexicon(5, 10);
            let spec = SyntheticSpec {
                lexicon,
                sentence_length_range: (2, 4),
                num_sentences: 10,
                seed: 5,
            };
            let corpus = generate_synthetic_corpus(&spec).unwrap();
            let pairs: Vec<(CharSequence, Vec<String>)> = corpus
                .sentences
                .into_iter()
                .zip(corpus.gold.iter().map(|w| bmes_tags_for_words(w)))
                .collect();
            LabeledDataset::from_pairs(pairs).unwrap()
        };
        let (model, _) = fine_tune(
            &loaded,
            &train_data,
            None,
            SchemeKind::Bmes,
            &FineTuneOptions {
                epochs: 2,
                batch_size: 4,
                lr: 1e-3,
                seed: 1,
                constrained_decode: false,
            },
        )
        .unwrap();
        let fpath = dir.path().join("ft.ckpt");
        save_checkpoint(&model.to_checkpoint(), &fpath).unwrap();
        let reloaded = babound::crf::FineTunedModel::from_checkpoint(
            load_checkpoint(&fpath).unwrap(),
        )
        .unwrap();
        assert_eq!(model, reloaded, "fine-tuned checkpoint round trip");
        let s = &train_data.sentences[0].text;
        assert_eq!(
            label_sentence(&model, s, false),
            label_sentence(&reloaded, s, false)
        );
    });
}
