//! Corpus ingestion and synthetic corpus generation.
//!
//! A corpus is UTF-8 text with one sentence per line. Normalization strips
//! whitespace and control characters and drops lines that end up empty; the
//! character unit is the Unicode scalar value. Synthetic corpora concatenate
//! words sampled from a weighted lexicon and carry their gold segmentation,
//! which downstream property tests use as an oracle.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A normalized sentence: a non-empty sequence of Unicode scalar values with
/// no whitespace or control characters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CharSequence {
    chars: Vec<char>,
}

impl CharSequence {
    /// Builds a sequence from pre-normalized characters.
    ///
    /// Callers that start from raw text should use [`normalize_sentence`].
    pub fn new(chars: Vec<char>) -> Result<Self> {
        if chars.is_empty() {
            return Err(Error::EmptyInput("empty character sequence".into()));
        }
        if let Some(c) = chars.iter().find(|c| c.is_whitespace() || c.is_control()) {
            return Err(Error::Config(format!(
                "character {c:?} is whitespace or control; normalize first"
            )));
        }
        Ok(CharSequence { chars })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// The sentence as a plain string.
    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }
}

impl std::fmt::Display for CharSequence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.chars {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Normalizes one raw line: keeps non-whitespace, non-control scalar values
/// in order. Returns `None` when nothing remains.
///
/// With `nfkc` set, applies a lightweight compatibility fold for full-width
/// ASCII forms before filtering (off by default to keep counts reproducible).
pub fn normalize_sentence(raw: &str, nfkc: bool) -> Option<CharSequence> {
    let mapped = raw.chars().map(|c| if nfkc { fold_fullwidth(c) } else { c });
    let chars: Vec<char> = mapped
        .filter(|c| !c.is_whitespace() && !c.is_control())
        .collect();
    if chars.is_empty() {
        None
    } else {
        Some(CharSequence { chars })
    }
}

/// Maps full-width ASCII variants (U+FF01..U+FF5E) and the ideographic space
/// to their ASCII counterparts. A pragmatic subset of NFKC sufficient for
/// mixed-width corpora.
fn fold_fullwidth(c: char) -> char {
    match c {
        '\u{3000}' => ' ',
        '\u{FF01}'..='\u{FF5E}' => {
            char::from_u32(c as u32 - 0xFF01 + 0x21).unwrap_or(c)
        }
        _ => c,
    }
}

/// A deterministic stream of sentences from one source.
///
/// Single-consumer; several independent streams over the same file may run
/// concurrently.
pub struct SentenceStream {
    source: String,
    iter: Box<dyn Iterator<Item = Result<CharSequence>> + Send>,
}

impl SentenceStream {
    /// Stream over an in-memory list of sentences.
    pub fn from_sentences(source: impl Into<String>, sentences: Vec<CharSequence>) -> Self {
        SentenceStream {
            source: source.into(),
            iter: Box::new(sentences.into_iter().map(Ok)),
        }
    }

    /// Identifier of the underlying corpus (usually the file path).
    pub fn source(&self) -> &str {
        &self.source
    }

    /// Collects the remaining sentences, propagating the first error.
    pub fn collect_sentences(self) -> Result<Vec<CharSequence>> {
        self.iter.collect()
    }
}

impl Iterator for SentenceStream {
    type Item = Result<CharSequence>;

    fn next(&mut self) -> Option<Self::Item> {
        self.iter.next()
    }
}

impl std::fmt::Debug for SentenceStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SentenceStream")
            .field("source", &self.source)
            .finish_non_exhaustive()
    }
}

/// Opens a line-per-sentence corpus file. Lines are normalized lazily in
/// file order; empty-after-normalization lines are skipped. Invalid UTF-8
/// yields an error naming the line and byte offset.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<SentenceStream> {
    load_corpus_with(path, false)
}

/// [`load_corpus`] with an explicit compatibility-fold flag.
pub fn load_corpus_with(path: impl AsRef<Path>, nfkc: bool) -> Result<SentenceStream> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let reader = BufReader::new(file);
    let source = path.display().to_string();

    let iter = LineIter {
        reader,
        path,
        line: 0,
        nfkc,
    };
    Ok(SentenceStream {
        source,
        iter: Box::new(iter),
    })
}

struct LineIter {
    reader: BufReader<File>,
    path: PathBuf,
    line: usize,
    nfkc: bool,
}

impl Iterator for LineIter {
    type Item = Result<CharSequence>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line += 1;
            let mut buf = Vec::new();
            match self.reader.read_until(b'\n', &mut buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            }
            let text = match std::str::from_utf8(&buf) {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(Error::Utf8 {
                        path: self.path.clone(),
                        line: self.line,
                        offset: e.valid_up_to(),
                    }))
                }
            };
            if let Some(seq) = normalize_sentence(text, self.nfkc) {
                return Some(Ok(seq));
            }
            // empty after normalization: skip and keep reading
        }
    }
}

/// Writes sentences one per line (LF endings). The write is atomic:
/// a temporary file in the same directory is renamed into place.
pub fn write_corpus(path: impl AsRef<Path>, sentences: &[CharSequence]) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, |w| {
        for s in sentences {
            writeln!(w, "{s}")?;
        }
        Ok(())
    })
}

/// Runs `f` against a buffered writer on a temp file, then renames it onto
/// `path`. Readers never observe a partial file.
pub(crate) fn write_atomic(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp_path = dir.join(format!(
        ".{}.tmp.{}",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&tmp_path)?);
        f(&mut w)?;
        w.flush()?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        std::fs::rename(&tmp_path, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp_path);
        Error::io(path, e)
    })
}

/// Recipe for a synthetic corpus with a known segmentation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    /// Words and their sampling weights; all weights must be positive.
    pub lexicon: Vec<(String, f64)>,
    /// Inclusive range of words per sentence.
    pub sentence_length_range: (usize, usize),
    pub num_sentences: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.lexicon.is_empty() {
            return Err(Error::Config("synthetic lexicon is empty".into()));
        }
        for (w, weight) in &self.lexicon {
            if w.is_empty() {
                return Err(Error::Config("synthetic lexicon contains an empty word".into()));
            }
            if w.chars().any(|c| c.is_whitespace() || c.is_control()) {
                return Err(Error::Config(format!(
                    "lexicon word {w:?} contains whitespace or control characters"
                )));
            }
            if !(*weight > 0.0) {
                return Err(Error::Config(format!("weight for {w:?} must be > 0")));
            }
        }
        let (min, max) = self.sentence_length_range;
        if min < 1 || min > max {
            return Err(Error::Config(format!(
                "invalid sentence length range ({min}, {max})"
            )));
        }
        Ok(())
    }
}

/// A generated corpus together with its gold segmentation, one word list per
/// sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub sentences: Vec<CharSequence>,
    pub gold: Vec<Vec<String>>,
}

impl SyntheticCorpus {
    pub fn stream(&self, source: impl Into<String>) -> SentenceStream {
        SentenceStream::from_sentences(source, self.sentences.clone())
    }

    /// Writes the corpus plus a sidecar gold file (space-separated words per
    /// line).
    pub fn write(&self, corpus_path: impl AsRef<Path>, gold_path: impl AsRef<Path>) -> Result<()> {
        write_corpus(&corpus_path, &self.sentences)?;
        write_atomic(gold_path.as_ref(), |w| {
            for words in &self.gold {
                writeln!(w, "{}", words.join(" "))?;
            }
            Ok(())
        })
    }
}

/// Generates a corpus by sampling words i.i.d. from the lexicon proportional
/// to weight, with per-sentence word counts uniform in the configured range.
/// Output is a pure function of the spec, seed included.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let cumulative: Vec<f64> = spec
        .lexicon
        .iter()
        .scan(0.0, |acc, (_, w)| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let total_weight = *cumulative.last().unwrap();

    let (min_len, max_len) = spec.sentence_length_range;
    let mut sentences = Vec::with_capacity(spec.num_sentences);
    let mut gold = Vec::with_capacity(spec.num_sentences);

    for _ in 0..spec.num_sentences {
        let n_words = rng.gen_range(min_len..=max_len);
        let mut words = Vec::with_capacity(n_words);
        let mut chars = Vec::new();
        for _ in 0..n_words {
            let x = rng.gen::<f64>() * total_weight;
            let idx = cumulative.partition_point(|&c| c <= x).min(spec.lexicon.len() - 1);
            let word = &spec.lexicon[idx].0;
            chars.extend(word.chars());
            words.push(word.clone());
        }
        sentences.push(CharSequence { chars });
        gold.push(words);
    }

    Ok(SyntheticCorpus { sentences, gold })
}
