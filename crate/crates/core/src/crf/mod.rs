//! Linear-chain CRF sequence labeling over encoder features: log-likelihood
//! training, Viterbi decoding, and span-level evaluation.

mod chain;
mod data;
mod eval;
mod train;

pub use chain::{
    crf_log_likelihood, log_partition, path_score, viterbi_decode, viterbi_decode_with, CrfModel,
};
pub use data::{
    bmes_tags_for_words, load_labeled_file, save_labeled_file, LabeledDataset, LabeledSentence,
    SchemeKind, TagScheme,
};
pub use eval::{evaluate_f1, extract_spans, segment_text, F1Score, Span};
pub use train::{fine_tune, label_sentence, EpochMetrics, FineTuneOptions, FineTunedModel};
