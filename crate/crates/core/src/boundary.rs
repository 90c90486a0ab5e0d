//! Per-character boundary vectors.
//!
//! For a character at position `i` with maximum gram length `N`, the
//! contextual window set holds every n-gram covering the character, in a
//! fixed order: grams grouped by length `1..=N` ascending, and within each
//! length by how far the character sits from the gram's left edge. The
//! boundary vector concatenates, in order:
//!
//! * `e_le` (`N` slots) — left entropy of the grams *starting* at `i`,
//! * `e_p` (`N(N+1)/2` slots) — PMI of every window's gram,
//! * `e_re` (`N` slots) — right entropy of the grams *ending* at `i`.
//!
//! Slots whose window runs off the sentence, or whose gram is missing from
//! the dictionary, are filled with the default 0.0 — the entropy of a
//! deterministic context, and a neutral PMI once targets are z-scored.

use ndarray::{Array1, Array2};

use crate::corpus::{CharSequence, SentenceStream};
use crate::error::{Error, Result};
use crate::ngram::NgramDictionary;

/// Default slot value for out-of-range, filtered, or unseen grams.
pub const DEFAULT_FILL: f64 = 0.0;

/// Number of PMI slots for maximum gram length `n`.
pub fn pmi_dim(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Total boundary-vector dimension: `N(N+1)/2 + 2N`.
pub fn boundary_dim(n: usize) -> usize {
    pmi_dim(n) + 2 * n
}

/// One n-gram window. `start` may be negative or extend past the sentence;
/// such windows are flagged, never silently dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: isize,
    pub len: usize,
}

impl Window {
    pub fn in_range(&self, sentence_len: usize) -> bool {
        self.start >= 0 && (self.start as usize) + self.len <= sentence_len
    }
}

/// All windows covering position `i`, grouped by length ascending, within a
/// length by offset of `i` from the window start ascending. The first window
/// is `(i, 1)` and the last `(i - N + 1, N)`.
pub fn contextual_ngram_set(sentence_len: usize, i: usize, max_n: usize) -> Vec<Window> {
    assert!(i < sentence_len, "position {i} outside sentence of length {sentence_len}");
    let mut windows = Vec::with_capacity(pmi_dim(max_n));
    for len in 1..=max_n {
        for offset in 0..len {
            windows.push(Window {
                start: i as isize - offset as isize,
                len,
            });
        }
    }
    windows
}

fn gram_of(chars: &[char], w: Window) -> Option<String> {
    if !w.in_range(chars.len()) {
        return None;
    }
    let start = w.start as usize;
    Some(chars[start..start + w.len].iter().collect())
}

/// PMI slots for position `i`: one per window, dictionary misses filled
/// with the default.
pub fn pmi_vector(dict: &NgramDictionary, sentence: &CharSequence, i: usize) -> Vec<f64> {
    let max_n = dict.config().max_n;
    let chars = sentence.chars();
    contextual_ngram_set(chars.len(), i, max_n)
        .into_iter()
        .map(|w| {
            gram_of(chars, w)
                .and_then(|g| dict.get(&g).map(|e| e.pmi))
                .unwrap_or(DEFAULT_FILL)
        })
        .collect()
}

/// Entropy slots for position `i`.
///
/// `e_le[L-1]` is the left entropy of the length-`L` gram starting at `i`
/// (the character is the gram's left border); `e_re[L-1]` is the right
/// entropy of the length-`L` gram ending at `i`.
pub fn entropy_vectors(
    dict: &NgramDictionary,
    sentence: &CharSequence,
    i: usize,
) -> (Vec<f64>, Vec<f64>) {
    let max_n = dict.config().max_n;
    let chars = sentence.chars();
    let mut le = Vec::with_capacity(max_n);
    let mut re = Vec::with_capacity(max_n);
    for len in 1..=max_n {
        let starting = Window {
            start: i as isize,
            len,
        };
        le.push(
            gram_of(chars, starting)
                .and_then(|g| dict.get(&g).map(|e| e.le))
                .unwrap_or(DEFAULT_FILL),
        );
        let ending = Window {
            start: i as isize - (len as isize - 1),
            len,
        };
        re.push(
            gram_of(chars, ending)
                .and_then(|g| dict.get(&g).map(|e| e.re))
                .unwrap_or(DEFAULT_FILL),
        );
    }
    (le, re)
}

/// The assembled boundary vector of one character.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryVector {
    pub le: Vec<f64>,
    pub pmi: Vec<f64>,
    pub re: Vec<f64>,
}

impl BoundaryVector {
    pub fn dim(&self) -> usize {
        self.le.len() + self.pmi.len() + self.re.len()
    }

    /// Concatenation in the fixed order `e_le ⊕ e_p ⊕ e_re`.
    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.le);
        v.extend_from_slice(&self.pmi);
        v.extend_from_slice(&self.re);
        v
    }
}

/// Boundary vector for one character position.
pub fn encode_character(dict: &NgramDictionary, sentence: &CharSequence, i: usize) -> BoundaryVector {
    let (le, re) = entropy_vectors(dict, sentence, i);
    let pmi = pmi_vector(dict, sentence, i);
    BoundaryVector { le, pmi, re }
}

/// Encodes a whole sentence as an `n × dim` matrix, row `i` being the
/// boundary vector of character `i`. Pure in `(dict, sentence)`.
pub fn encode_sentence(dict: &NgramDictionary, sentence: &CharSequence) -> Array2<f64> {
    let n = sentence.len();
    let dim = boundary_dim(dict.config().max_n);
    let mut out = Array2::zeros((n, dim));
    for i in 0..n {
        let row = encode_character(dict, sentence, i).concat();
        for (j, v) in row.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Per-dimension z-score statistics, fitted on a sample of encoded
/// characters. Applied to boundary vectors before they serve as regression
/// targets; raw statistics stay in the dictionary.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Dimensions whose raw standard deviation fell below the floor and
    /// were clamped.
    pub clamped_dims: Vec<usize>,
    /// What the statistics were fitted on.
    pub fitted_on: String,
}

/// Standard deviations below this are clamped so constant dimensions
/// normalize to zero instead of dividing by zero.
pub const STD_FLOOR: f64 = 1e-8;

const MIN_FIT_CHARS: usize = 100;

/// Fits per-dimension mean and population standard deviation over every
/// character of the sample stream. Needs at least 100 characters.
pub fn fit_normalizer(dict: &NgramDictionary, sample: SentenceStream) -> Result<Normalizer> {
    let fitted_on = sample.source().to_string();
    let dim = boundary_dim(dict.config().max_n);
    let mut count = 0usize;
    let mut mean = vec![0.0f64; dim];
    let mut m2 = vec![0.0f64; dim];

    for sentence in sample {
        let sentence = sentence?;
        for i in 0..sentence.len() {
            let row = encode_character(dict, &sentence, i).concat();
            count += 1;
            let k = count as f64;
            for (d, x) in row.into_iter().enumerate() {
                // Welford update
                let delta = x - mean[d];
                mean[d] += delta / k;
                m2[d] += delta * (x - mean[d]);
            }
        }
    }
    if count < MIN_FIT_CHARS {
        return Err(Error::Config(format!(
            "normalizer needs a sample of >= {MIN_FIT_CHARS} characters, got {count}"
        )));
    }

    let mut clamped = Vec::new();
    let std: Vec<f64> = m2
        .iter()
        .enumerate()
        .map(|(d, &m2d)| {
            let s = (m2d / count as f64).sqrt();
            if s < STD_FLOOR {
                clamped.push(d);
                STD_FLOOR
            } else {
                s
            }
        })
        .collect();

    Ok(Normalizer {
        mean,
        std,
        clamped_dims: clamped,
        fitted_on,
    })
}

impl Normalizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std`, per dimension, applied to each row.
    pub fn apply(&self, encoded: &Array2<f64>) -> Array2<f64> {
        let mut out = encoded.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, encoded: &mut Array2<f64>) {
        assert_eq!(encoded.ncols(), self.dim(), "dimension mismatch");
        for mut row in encoded.rows_mut() {
            for (d, x) in row.iter_mut().enumerate() {
                *x = (*x - self.mean[d]) / self.std[d];
            }
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Array1<f64> {
        assert_eq!(row.len(), self.dim(), "dimension mismatch");
        Array1::from_iter(
            row.iter()
                .enumerate()
                .map(|(d, &x)| (x - self.mean[d]) / self.std[d]),
        )
    }

    /// Inverse transform: `x * std + mean`.
    pub fn invert(&self, normalized: &Array2<f64>) -> Array2<f64> {
        assert_eq!(normalized.ncols(), self.dim(), "dimension mismatch");
        let mut out = normalized.clone();
        for mut row in out.rows_mut() {
            for (d, x) in row.iter_mut().enumerate() {
                *x = *x * self.std[d] + self.mean[d];
            }
        }
        out
    }
}
