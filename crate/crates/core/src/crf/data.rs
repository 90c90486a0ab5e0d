//! Tag schemes and labeled data in character-per-line format.
//!
//! Files are UTF-8, one `char<TAB>tag` per line, blank line between
//! sentences.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::corpus::{write_atomic, CharSequence};
use crate::error::{Error, Result};

/// Tagging scheme: BMES for segmentation, BIO for labeled spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Bmes,
    Bio,
}

impl SchemeKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bmes" => Ok(SchemeKind::Bmes),
            "bio" => Ok(SchemeKind::Bio),
            other => Err(Error::Config(format!(
                "unknown tag scheme {other:?} (expected bmes or bio)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Bmes => "bmes",
            SchemeKind::Bio => "bio",
        }
    }
}

/// A scheme kind with its concrete tag inventory and the transition
/// validity table. The table drives optional constrained decoding and the
/// decode-time repair; training never masks transitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagScheme {
    kind: SchemeKind,
    tags: Vec<String>,
}

impl TagScheme {
    /// The fixed segmentation inventory.
    pub fn bmes() -> Self {
        TagScheme {
            kind: SchemeKind::Bmes,
            tags: ["B", "M", "E", "S"].map(String::from).to_vec(),
        }
    }

    /// BIO inventory from the tags observed in datasets: `O` plus
    /// `B-X`/`I-X` pairs, deterministic order.
    pub fn bio_from_observed<'a>(observed: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for tag in observed {
            validate_bio_tag(tag)?;
            set.insert(tag.to_string());
            // make sure every I-X has its B-X and vice versa
            if let Some(label) = tag.strip_prefix("B-") {
                set.insert(format!("I-{label}"));
            } else if let Some(label) = tag.strip_prefix("I-") {
                set.insert(format!("B-{label}"));
            }
        }
        set.insert("O".to_string());
        Ok(TagScheme {
            kind: SchemeKind::Bio,
            tags: set.into_iter().collect(),
        })
    }

    /// Builds the scheme for a dataset: fixed inventory for BMES, observed
    /// inventory for BIO.
    pub fn for_dataset(kind: SchemeKind, dataset: &LabeledDataset) -> Result<Self> {
        match kind {
            SchemeKind::Bmes => Ok(Self::bmes()),
            SchemeKind::Bio => {
                Self::bio_from_observed(dataset.sentences.iter().flat_map(|s| {
                    s.tags.iter().map(|t| t.as_str())
                }))
            }
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn tag_id(&self, tag: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    /// Restores a scheme from checkpoint metadata.
    pub fn from_parts(kind: SchemeKind, tags: Vec<String>) -> Self {
        TagScheme { kind, tags }
    }

    /// Encodes one sentence's tags, naming the sentence on failure.
    pub fn encode_tags(&self, tags: &[String], sentence_index: usize) -> Result<Vec<usize>> {
        tags.iter()
            .map(|t| {
                self.tag_id(t).ok_or_else(|| Error::InvalidTag {
                    tag: t.clone(),
                    sentence: sentence_index,
                    reason: format!("not in the {} inventory", self.kind.name()),
                })
            })
            .collect()
    }

    /// Whether `from → to` is a legal tag bigram.
    pub fn is_valid_transition(&self, from: usize, to: usize) -> bool {
        match self.kind {
            SchemeKind::Bmes => {
                let f = self.tags[from].as_str();
                let t = self.tags[to].as_str();
                matches!(
                    (f, t),
                    ("B", "M") | ("B", "E") | ("M", "M") | ("M", "E")
                        | ("E", "B") | ("E", "S") | ("S", "B") | ("S", "S")
                )
            }
            SchemeKind::Bio => {
                let t = self.tags[to].as_str();
                if let Some(label) = t.strip_prefix("I-") {
                    let f = self.tags[from].as_str();
                    f == format!("B-{label}") || f == format!("I-{label}")
                } else {
                    true
                }
            }
        }
    }

    pub fn is_valid_start(&self, tag: usize) -> bool {
        match self.kind {
            SchemeKind::Bmes => matches!(self.tags[tag].as_str(), "B" | "S"),
            SchemeKind::Bio => !self.tags[tag].starts_with("I-"),
        }
    }

    pub fn is_valid_end(&self, tag: usize) -> bool {
        match self.kind {
            SchemeKind::Bmes => matches!(self.tags[tag].as_str(), "E" | "S"),
            SchemeKind::Bio => true,
        }
    }
}

fn validate_bio_tag(tag: &str) -> Result<()> {
    if tag == "O" || tag.strip_prefix("B-").is_some_and(|l| !l.is_empty())
        || tag.strip_prefix("I-").is_some_and(|l| !l.is_empty())
    {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "malformed BIO tag {tag:?} (expected O, B-<label>, or I-<label>)"
        )))
    }
}

/// One labeled sentence: characters and tag strings of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSentence {
    pub text: CharSequence,
    pub tags: Vec<String>,
}

/// Sentences with per-character tags.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub sentences: Vec<LabeledSentence>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Builds a dataset from parallel character/tag sequences.
    pub fn from_pairs(pairs: Vec<(CharSequence, Vec<String>)>) -> Result<Self> {
        let mut sentences = Vec::with_capacity(pairs.len());
        for (i, (text, tags)) in pairs.into_iter().enumerate() {
            if text.len() != tags.len() {
                return Err(Error::InvalidTag {
                    tag: String::new(),
                    sentence: i,
                    reason: format!("{} chars but {} tags", text.len(), tags.len()),
                });
            }
            sentences.push(LabeledSentence { text, tags });
        }
        Ok(LabeledDataset { sentences })
    }
}

/// Reads character-per-line labeled data.
pub fn load_labeled_file(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut sentences = Vec::new();
    let mut chars: Vec<char> = Vec::new();
    let mut tags: Vec<String> = Vec::new();

    let mut flush = |chars: &mut Vec<char>, tags: &mut Vec<String>| -> Result<()> {
        if !chars.is_empty() {
            sentences.push(LabeledSentence {
                text: CharSequence::new(std::mem::take(chars))?,
                tags: std::mem::take(tags),
            });
        }
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() {
            flush(&mut chars, &mut tags)?;
            continue;
        }
        let (ch, tag) = trimmed.split_once('\t').ok_or_else(|| Error::DataFormat {
            path: path.to_path_buf(),
            line: line_no,
            reason: "expected char<TAB>tag".into(),
        })?;
        let mut ch_iter = ch.chars();
        let c = ch_iter.next().ok_or_else(|| Error::DataFormat {
            path: path.to_path_buf(),
            line: line_no,
            reason: "empty character field".into(),
        })?;
        if ch_iter.next().is_some() {
            return Err(Error::DataFormat {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("character field {ch:?} holds more than one character"),
            });
        }
        if tag.is_empty() {
            return Err(Error::DataFormat {
                path: path.to_path_buf(),
                line: line_no,
                reason: "empty tag field".into(),
            });
        }
        chars.push(c);
        tags.push(tag.to_string());
    }
    flush(&mut chars, &mut tags)?;

    Ok(LabeledDataset { sentences })
}

/// Writes character-per-line labeled data.
pub fn save_labeled_file(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        for (i, s) in dataset.sentences.iter().enumerate() {
            if i > 0 {
                writeln!(w)?;
            }
            for (c, t) in s.text.chars().iter().zip(&s.tags) {
                writeln!(w, "{c}\t{t}")?;
            }
        }
        Ok(())
    })
}

/// BMES tags for a gold word segmentation.
pub fn bmes_tags_for_words(words: &[String]) -> Vec<String> {
    let mut tags = Vec::new();
    for w in words {
        let n = w.chars().count();
        if n == 1 {
            tags.push("S".to_string());
        } else {
            tags.push("B".to_string());
            for _ in 1..n - 1 {
                tags.push("M".to_string());
            }
            tags.push("E".to_string());
        }
    }
    tags
}
