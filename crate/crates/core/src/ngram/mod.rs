//! N-gram boundary statistics.
//!
//! The extractor counts every contiguous n-gram (never crossing sentence
//! boundaries) up to length `max_n + 1`, keeps grams of length `1..=max_n`
//! that clear a frequency threshold, and scores each retained gram with
//! three indicators:
//!
//! * **PMI** — `min` over all binary splits of `p(g) / (p(left)·p(right))`,
//!   in ratio form (no logarithm); unigrams are fixed at exactly 1.
//! * **LE / RE** — Shannon entropy (nats) of the distribution of characters
//!   observed immediately left / right of the gram.
//!
//! Probabilities are `count / total_chars`, uniformly across gram lengths.
//! The extra `max_n + 1` counting length exists solely to supply adjacency
//! counts for grams of length `max_n`.

mod counts;
mod io;
mod stats;

pub use counts::{count_ngrams, count_ngrams_with_threads, effective_threads, CountsTable};
pub use io::{load_dictionary, save_dictionary, DictFormat};
pub use stats::{
    build_adjacency, build_dictionary, build_dictionary_from_counts, entropy, left_entropy,
    right_entropy, Adjacency, AdjacencyCounts,
};

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Extractor hyperparameters. Entropies always use the natural logarithm.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ExtractorConfig {
    /// Maximum n-gram length retained in the dictionary.
    pub max_n: usize,
    /// Minimum occurrence count; applies uniformly to every length,
    /// unigrams included.
    pub min_freq: u64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            max_n: 4,
            min_freq: 50,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_n < 1 {
            return Err(Error::Config("max_n must be >= 1".into()));
        }
        if self.min_freq < 1 {
            return Err(Error::Config("min_freq must be >= 1".into()));
        }
        Ok(())
    }
}

/// Statistics of one retained gram. The gram string itself is the
/// dictionary key.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NgramEntry {
    pub count: u64,
    /// Ratio-form PMI; exactly 1.0 for unigrams.
    pub pmi: f64,
    /// Left branching entropy in nats.
    pub le: f64,
    /// Right branching entropy in nats.
    pub re: f64,
}

/// Dictionary metadata carried through serialization.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DictMeta {
    pub total_chars: u64,
    pub corpus: String,
}

/// The frequency-filtered n-gram dictionary with per-gram statistics.
///
/// Immutable once built; safe for unlimited concurrent readers.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramDictionary {
    config: ExtractorConfig,
    meta: DictMeta,
    entries: HashMap<String, NgramEntry>,
}

impl NgramDictionary {
    /// Assembles a dictionary from explicit entries. The normal path is
    /// [`build_dictionary`]; this exists for hand-crafted dictionaries in
    /// tests and tools.
    pub fn from_parts(
        config: ExtractorConfig,
        meta: DictMeta,
        entries: HashMap<String, NgramEntry>,
    ) -> Self {
        NgramDictionary {
            config,
            meta,
            entries,
        }
    }

    /// Looks a gram up; `None` is a distinguishable miss, never a default.
    pub fn get(&self, gram: &str) -> Option<&NgramEntry> {
        self.entries.get(gram)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    pub fn meta(&self) -> &DictMeta {
        &self.meta
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &NgramEntry)> {
        self.entries.iter().map(|(g, e)| (g.as_str(), e))
    }

    /// Entries in canonical order: by character length, then lexicographic.
    /// Serialization uses this order so identical dictionaries produce
    /// byte-identical files.
    pub fn sorted_entries(&self) -> Vec<(&str, &NgramEntry)> {
        let mut v: Vec<(&str, &NgramEntry)> = self.entries().collect();
        v.sort_by(|a, b| {
            let la = a.0.chars().count();
            let lb = b.0.chars().count();
            la.cmp(&lb).then_with(|| a.0.cmp(b.0))
        });
        v
    }
}
