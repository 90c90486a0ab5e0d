//! Adjacency counts, branching entropy, and the dictionary build pipeline.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::corpus::SentenceStream;
use crate::error::{Error, Result};

use super::counts::{count_ngrams_with_threads, CountsTable};
use super::{DictMeta, ExtractorConfig, NgramDictionary, NgramEntry};

/// Left/right neighbor counts for one gram. Ordered maps keep entropy
/// summation order deterministic, so repeated builds are bit-identical.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Adjacency {
    /// `left[c]` = occurrences of `c·g`.
    pub left: BTreeMap<char, u64>,
    /// `right[c]` = occurrences of `g·c`.
    pub right: BTreeMap<char, u64>,
}

/// Adjacency maps for every retained gram, derived from the `(m+1)`-gram
/// counts rather than a second corpus pass. Occurrences at sentence edges
/// contribute nothing: there is no synthetic boundary symbol.
#[derive(Debug, Clone, Default)]
pub struct AdjacencyCounts {
    map: HashMap<String, Adjacency>,
}

impl AdjacencyCounts {
    pub fn get(&self, gram: &str) -> Option<&Adjacency> {
        self.map.get(gram)
    }
}

/// Builds adjacency maps for the retained grams by attributing each
/// `(m+1)`-gram count to its length-`m` prefix (a right neighbor) and
/// suffix (a left neighbor).
pub fn build_adjacency(counts: &CountsTable, retained: &[String]) -> AdjacencyCounts {
    let retained_set: HashSet<&str> = retained.iter().map(|s| s.as_str()).collect();
    let mut map: HashMap<String, Adjacency> = retained
        .iter()
        .map(|g| (g.clone(), Adjacency::default()))
        .collect();

    for len in 2..=counts.max_n() + 1 {
        for (gram, c) in counts.grams_of_len(len) {
            let mut iter = gram.char_indices();
            let (_, first_char) = iter.next().expect("gram of length >= 2");
            let (second_byte, _) = iter.next().expect("gram of length >= 2");
            let last_start = gram
                .char_indices()
                .last()
                .map(|(i, _)| i)
                .expect("non-empty gram");
            let last_char = gram[last_start..].chars().next().unwrap();

            let prefix = &gram[..last_start];
            if retained_set.contains(prefix) {
                *map.get_mut(prefix).unwrap().right.entry(last_char).or_insert(0) += c;
            }
            let suffix = &gram[second_byte..];
            if retained_set.contains(suffix) {
                *map.get_mut(suffix).unwrap().left.entry(first_char).or_insert(0) += c;
            }
        }
    }
    AdjacencyCounts { map }
}

/// Shannon entropy in nats of a count distribution normalized over its own
/// total. Zero for empty or single-key maps.
pub fn entropy(neighbor_counts: &BTreeMap<char, u64>) -> f64 {
    if neighbor_counts.len() <= 1 {
        return 0.0;
    }
    let total: u64 = neighbor_counts.values().sum();
    let total = total as f64;
    let mut h = 0.0;
    for &c in neighbor_counts.values() {
        let q = c as f64 / total;
        h -= q * q.ln();
    }
    h
}

/// Left branching entropy of one gram.
pub fn left_entropy(adj: &Adjacency) -> f64 {
    entropy(&adj.left)
}

/// Right branching entropy of one gram.
pub fn right_entropy(adj: &Adjacency) -> f64 {
    entropy(&adj.right)
}

/// Runs the full extractor pipeline: count, frequency-filter, adjacency,
/// then PMI/LE/RE for every retained gram. Deterministic for a fixed input;
/// sharded and single-pass builds produce identical dictionaries.
pub fn build_dictionary(
    stream: SentenceStream,
    config: &ExtractorConfig,
) -> Result<NgramDictionary> {
    config.validate()?;
    let corpus_id = stream.source().to_string();
    let counts = count_ngrams_with_threads(stream, config, super::counts::effective_threads())?;
    build_dictionary_from_counts(&counts, config, corpus_id)
}

/// Dictionary assembly from a pre-built counts table (lets callers shard or
/// merge counting however they like).
pub fn build_dictionary_from_counts(
    counts: &CountsTable,
    config: &ExtractorConfig,
    corpus_id: String,
) -> Result<NgramDictionary> {
    let retained = counts.filter_by_frequency(config.min_freq);
    if retained.is_empty() {
        return Err(Error::EmptyDictionary {
            min_freq: config.min_freq,
        });
    }
    let adjacency = build_adjacency(counts, &retained);

    let mut entries = HashMap::with_capacity(retained.len());
    for gram in retained {
        // A filtered split sub-string still has a raw count, so PMI stays
        // defined; a truly unseen sub-string excludes the gram.
        let Some(pmi) = counts.pmi(&gram) else {
            continue;
        };
        let adj = adjacency.get(&gram).expect("retained gram has adjacency");
        let entry = NgramEntry {
            count: counts.get(&gram).expect("retained gram has a count"),
            pmi,
            le: left_entropy(adj),
            re: right_entropy(adj),
        };
        entries.insert(gram, entry);
    }
    if entries.is_empty() {
        return Err(Error::EmptyDictionary {
            min_freq: config.min_freq,
        });
    }

    Ok(NgramDictionary::from_parts(
        config.clone(),
        DictMeta {
            total_chars: counts.total_chars(),
            corpus: corpus_id,
        },
        entries,
    ))
}
