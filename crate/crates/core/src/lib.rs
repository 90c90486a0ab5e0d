//! Boundary-information toolkit for unsegmented text.
//!
//! The pipeline has four stages:
//!
//! 1. [`corpus`] — ingest raw line-per-sentence text (and generate synthetic
//!    corpora with known gold segmentations for testing).
//! 2. [`ngram`] — mine a frequency-filtered n-gram dictionary from the corpus
//!    and score every retained gram with three unsupervised boundary
//!    indicators: pointwise mutual information (ratio form, minimized over
//!    all binary splits), left branching entropy, and right branching
//!    entropy.
//! 3. [`boundary`] — assemble a fixed-order per-character vector of those
//!    statistics (all n-gram windows covering the character), plus z-score
//!    normalization for use as regression targets.
//! 4. [`model`] / [`crf`] — train a small character encoder from scratch with
//!    masked-character prediction plus a boundary regression objective, then
//!    fine-tune it with a linear-chain CRF for sequence labeling.
//!
//! Everything is deterministic for a fixed seed and runs in 64-bit floats.

pub mod boundary;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod model;
pub mod ngram;

pub use error::{Error, Result};
