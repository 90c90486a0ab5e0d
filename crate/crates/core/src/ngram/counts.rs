//! Sharded n-gram counting.
//!
//! Sentences are pulled from the stream in batches and counted on scoped
//! threads into per-shard tables; the merge is integer addition, so the
//! result is independent of shard split and thread scheduling.

use std::collections::HashMap;
use std::thread;

use crate::corpus::{CharSequence, SentenceStream};
use crate::error::{Error, Result};

use super::ExtractorConfig;

const BATCH_SENTENCES: usize = 8192;

/// Occurrence counts for every gram of length `1..=max_n+1`, plus the total
/// character count `T` that backs the probability estimator `count / T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsTable {
    max_n: usize,
    /// `by_len[k]` holds counts for grams of length `k + 1`.
    by_len: Vec<HashMap<String, u64>>,
    total_chars: u64,
}

impl CountsTable {
    pub fn new(max_n: usize) -> Self {
        CountsTable {
            max_n,
            by_len: (0..=max_n).map(|_| HashMap::new()).collect(),
            total_chars: 0,
        }
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    /// Total unigram occurrences in the corpus.
    pub fn total_chars(&self) -> u64 {
        self.total_chars
    }

    /// Count of a gram of any counted length (`1..=max_n+1`); `None` if the
    /// gram was never observed.
    pub fn get(&self, gram: &str) -> Option<u64> {
        let len = gram.chars().count();
        if len == 0 || len > self.max_n + 1 {
            return None;
        }
        self.by_len[len - 1].get(gram).copied()
    }

    /// All (gram, count) pairs of the given length.
    pub fn grams_of_len(&self, len: usize) -> impl Iterator<Item = (&str, u64)> {
        assert!(
            (1..=self.max_n + 1).contains(&len),
            "length {len} outside counted range"
        );
        self.by_len[len - 1].iter().map(|(g, c)| (g.as_str(), *c))
    }

    /// Counts every contiguous window of length `1..=max_n+1` in one
    /// sentence. Windows never cross sentences.
    pub fn count_sentence(&mut self, sentence: &CharSequence) {
        let chars = sentence.chars();
        let n = chars.len();
        self.total_chars += n as u64;
        let mut key = String::new();
        for len in 1..=(self.max_n + 1).min(n) {
            let map = &mut self.by_len[len - 1];
            for window in chars.windows(len) {
                key.clear();
                key.extend(window.iter());
                if let Some(v) = map.get_mut(key.as_str()) {
                    *v += 1;
                } else {
                    map.insert(key.clone(), 1);
                }
            }
        }
    }

    /// Adds another table's counts into this one. Addition commutes, so any
    /// shard split merges to the same table.
    pub fn merge_from(&mut self, other: CountsTable) {
        assert_eq!(self.max_n, other.max_n, "cannot merge tables with different max_n");
        self.total_chars += other.total_chars;
        for (mine, theirs) in self.by_len.iter_mut().zip(other.by_len) {
            for (gram, c) in theirs {
                *mine.entry(gram).or_insert(0) += c;
            }
        }
    }

    /// Grams of length `1..=max_n` with `count >= min_freq`, in canonical
    /// order (length, then lexicographic). Unigrams follow the same rule.
    pub fn filter_by_frequency(&self, min_freq: u64) -> Vec<String> {
        let mut retained = Vec::new();
        for len in 1..=self.max_n {
            let mut of_len: Vec<&String> = self.by_len[len - 1]
                .iter()
                .filter(|(_, &c)| c >= min_freq)
                .map(|(g, _)| g)
                .collect();
            of_len.sort_unstable();
            retained.extend(of_len.into_iter().cloned());
        }
        retained
    }

    /// `p(gram) = count / T`. Unseen grams are a miss, not zero.
    pub fn estimate_prob(&self, gram: &str) -> Result<f64> {
        let count = self
            .get(gram)
            .ok_or_else(|| Error::UnseenGram(gram.to_string()))?;
        Ok(count as f64 / self.total_chars as f64)
    }

    /// Ratio-form PMI minimized over every binary split. Exactly 1 for
    /// unigrams. `None` when a required sub-string count is missing
    /// (impossible for an observed gram; kept as a safety signal).
    ///
    /// Splits use raw pre-filter counts, so frequency filtering never
    /// poisons the PMI of longer grams.
    pub fn pmi(&self, gram: &str) -> Option<f64> {
        let boundaries: Vec<usize> = gram
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(gram.len()))
            .collect();
        let m = boundaries.len() - 1;
        if m == 0 {
            return None;
        }
        if m == 1 {
            self.get(gram)?;
            return Some(1.0);
        }
        let count_g = self.get(gram)? as f64;
        let t = self.total_chars as f64;
        let mut min_ratio = f64::INFINITY;
        for split in 1..m {
            let left = &gram[..boundaries[split]];
            let right = &gram[boundaries[split]..];
            let cl = self.get(left)? as f64;
            let cr = self.get(right)? as f64;
            let ratio = count_g * t / (cl * cr);
            if ratio < min_ratio {
                min_ratio = ratio;
            }
        }
        Some(min_ratio)
    }
}

/// Counting parallelism: `BABOUND_THREADS` if set, else machine parallelism.
pub fn effective_threads() -> usize {
    if let Ok(v) = std::env::var("BABOUND_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Counts a whole stream, sharding each batch of sentences across threads.
///
/// An empty stream yields an empty table with `T = 0`; the caller decides
/// whether that is a warning or an error.
pub fn count_ngrams(stream: SentenceStream, config: &ExtractorConfig) -> Result<CountsTable> {
    config.validate()?;
    count_ngrams_with_threads(stream, config, effective_threads())
}

/// [`count_ngrams`] with an explicit shard count (1 = single-pass).
pub fn count_ngrams_with_threads(
    mut stream: SentenceStream,
    config: &ExtractorConfig,
    threads: usize,
) -> Result<CountsTable> {
    config.validate()?;
    let threads = threads.max(1);
    let mut master = CountsTable::new(config.max_n);
    let mut batch: Vec<CharSequence> = Vec::with_capacity(BATCH_SENTENCES);
    let mut exhausted = false;

    while !exhausted {
        batch.clear();
        while batch.len() < BATCH_SENTENCES {
            match stream.next() {
                Some(Ok(s)) => batch.push(s),
                Some(Err(e)) => return Err(e),
                None => {
                    exhausted = true;
                    break;
                }
            }
        }
        if batch.is_empty() {
            break;
        }
        if threads == 1 || batch.len() < 2 * threads {
            for s in &batch {
                master.count_sentence(s);
            }
        } else {
            let chunk = batch.len().div_ceil(threads);
            let max_n = config.max_n;
            let shards: Vec<CountsTable> = thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .chunks(chunk)
                    .map(|sentences| {
                        scope.spawn(move || {
                            let mut t = CountsTable::new(max_n);
                            for s in sentences {
                                t.count_sentence(s);
                            }
                            t
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("shard panicked")).collect()
            });
            for shard in shards {
                master.merge_from(shard);
            }
        }
    }
    Ok(master)
}
