//! Desk-scale character encoder trained from scratch.
//!
//! A pre-layer-norm transformer encoder in 64-bit floats with hand-written
//! backpropagation, trained on two objectives at once: masked-character
//! cross-entropy, and a regression from a configurable shallow layer's
//! hidden states onto normalized per-character boundary vectors. The total
//! loss is the plain sum of the two. There is no next-sentence objective.
//!
//! Everything is deterministic for a fixed seed: initialization, masking,
//! batch order, and therefore entire loss trajectories. A finite-difference
//! gradient checker covers every parameter tensor.

mod adam;
mod backward;
mod checkpoint;
mod forward;
mod gradcheck;
mod loss;
mod params;
mod train;

pub use adam::AdamState;
pub(crate) use adam::adam_step_slice;
pub(crate) use backward::{backward_sequence, SeqGrads};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CrfBundle};
pub use forward::{forward, forward_cached, ForwardCache, HiddenStates};
pub use gradcheck::{gradient_check, max_error_against_numeric, GradCheckReport};
pub use loss::{boundary_loss, mask_batch, mlm_loss, LossReport, MaskedBatch};
pub use params::{LayerParams, TensorLike, ToyEncoderParams};
pub use train::{
    pretrain, pretrain_step, resume_pretrain, seed_for_step, PretrainOptions, TrainState,
};

use std::collections::HashMap;

use crate::corpus::CharSequence;
use crate::error::{Error, Result};

/// Character inventory plus the three special ids.
///
/// Ids: PAD = 0, UNK = 1, MASK = 2, then characters in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    index: HashMap<char, u32>,
}

impl Vocab {
    pub const PAD: u32 = 0;
    pub const UNK: u32 = 1;
    pub const MASK: u32 = 2;
    pub const NUM_SPECIALS: u32 = 3;

    /// Builds the inventory from every character observed in the corpus.
    pub fn from_corpus<'a>(sentences: impl IntoIterator<Item = &'a CharSequence>) -> Self {
        let mut chars: Vec<char> = sentences
            .into_iter()
            .flat_map(|s| s.chars().iter().copied())
            .collect();
        chars.sort_unstable();
        chars.dedup();
        Self::from_chars(chars)
    }

    pub fn from_chars(chars: Vec<char>) -> Self {
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32 + Self::NUM_SPECIALS))
            .collect();
        Vocab { chars, index }
    }

    pub fn size(&self) -> usize {
        self.chars.len() + Self::NUM_SPECIALS as usize
    }

    pub fn id_of(&self, c: char) -> u32 {
        self.index.get(&c).copied().unwrap_or(Self::UNK)
    }

    pub fn encode(&self, sentence: &CharSequence) -> Vec<u32> {
        sentence.chars().iter().map(|&c| self.id_of(c)).collect()
    }

    /// Character for a non-special id, if any.
    pub fn char_of(&self, id: u32) -> Option<char> {
        id.checked_sub(Self::NUM_SPECIALS)
            .and_then(|i| self.chars.get(i as usize).copied())
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

impl serde::Serialize for Vocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let joined: String = self.chars.iter().collect();
        s.serialize_str(&joined)
    }
}

impl<'de> serde::Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let joined = String::deserialize(d)?;
        Ok(Vocab::from_chars(joined.chars().collect()))
    }
}

/// Encoder hyperparameters. `ba_layer` is 1-indexed: the boundary
/// regression reads the output of that block.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub vocab: Vocab,
    pub d_model: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub ba_layer: usize,
    pub boundary_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults sized for a desk-scale run; callers override fields freely.
    pub fn new(vocab: Vocab, boundary_dim: usize, seed: u64) -> Self {
        ModelConfig {
            vocab,
            d_model: 32,
            num_layers: 4,
            num_heads: 1,
            ffn_dim: 64,
            max_len: 64,
            ba_layer: 1,
            boundary_dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.num_layers == 0 || self.ffn_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.num_heads == 0 || self.d_model % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by num_heads {}",
                self.d_model, self.num_heads
            )));
        }
        if self.ba_layer < 1 || self.ba_layer > self.num_layers {
            return Err(Error::Config(format!(
                "ba_layer {} outside 1..={}",
                self.ba_layer, self.num_layers
            )));
        }
        if self.boundary_dim == 0 {
            return Err(Error::Config("boundary_dim must be positive".into()));
        }
        Ok(())
    }

    /// Encodes and truncates a sentence to `max_len`, reporting whether it
    /// was cut.
    pub fn encode_truncated(&self, sentence: &CharSequence) -> (Vec<u32>, bool) {
        let mut ids = self.vocab.encode(sentence);
        let truncated = ids.len() > self.max_len;
        ids.truncate(self.max_len);
        (ids, truncated)
    }
}
