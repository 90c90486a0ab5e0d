//! Dictionary persistence.
//!
//! Two interchangeable formats carry identical information, so conversion
//! in either direction preserves every entry and float bit-exactly:
//!
//! * **JSON Lines** (canonical): line 1 is a header object
//!   `{"version":1,"max_n":…,"min_freq":…,"total_chars":…,"log_base":"e",
//!   "entries":…,"corpus":…}`; each following line is one entry
//!   `{"g":…,"count":…,"pmi":…,"le":…,"re":…}` with floats rendered as
//!   shortest round-trip decimals.
//! * **Binary**: magic `BAST`, a version byte, header fields as
//!   little-endian u64, the corpus id, then per entry a varint-prefixed
//!   UTF-8 gram, a varint count, and three little-endian f64 values.
//!   A SHA-256 trailer guards against truncation and corruption.
//!
//! Entries are written in canonical order (length, then lexicographic), so
//! equal dictionaries serialize to identical bytes. Writes go through a
//! temp file and rename, so readers never see a partial dictionary.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::write_atomic;
use crate::error::{Error, Result};

use super::{DictMeta, ExtractorConfig, NgramDictionary, NgramEntry};

const JSONL_VERSION: u32 = 1;
const BINARY_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"BAST";

/// On-disk representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictFormat {
    Jsonl,
    Binary,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    version: u32,
    max_n: usize,
    min_freq: u64,
    total_chars: u64,
    log_base: String,
    entries: usize,
    corpus: String,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct EntryLine<'a> {
    g: std::borrow::Cow<'a, str>,
    count: u64,
    pmi: f64,
    le: f64,
    re: f64,
}

/// Writes a dictionary in the requested format.
pub fn save_dictionary(
    dict: &NgramDictionary,
    path: impl AsRef<Path>,
    format: DictFormat,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        DictFormat::Jsonl => save_jsonl(dict, path),
        DictFormat::Binary => save_binary(dict, path),
    }
}

/// Loads a dictionary, sniffing the format from the leading magic bytes.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<NgramDictionary> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    drop(file);
    if n == 4 && &magic == MAGIC {
        load_binary(path)
    } else {
        load_jsonl(path)
    }
}

fn save_jsonl(dict: &NgramDictionary, path: &Path) -> Result<()> {
    let sorted = dict.sorted_entries();
    let header = Header {
        version: JSONL_VERSION,
        max_n: dict.config().max_n,
        min_freq: dict.config().min_freq,
        total_chars: dict.meta().total_chars,
        log_base: "e".to_string(),
        entries: sorted.len(),
        corpus: dict.meta().corpus.clone(),
    };
    write_atomic(path, |w| {
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        for (gram, e) in &sorted {
            let line = EntryLine {
                g: std::borrow::Cow::Borrowed(gram),
                count: e.count,
                pmi: e.pmi,
                le: e.le,
                re: e.re,
            };
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

fn load_jsonl(path: &Path) -> Result<NgramDictionary> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, first) = lines.next().ok_or_else(|| Error::DictFormat {
        path: path.to_path_buf(),
        line: 1,
        reason: "empty file".into(),
    })?;
    let first = first.map_err(|e| Error::io(path, e))?;

    // Check the version before strict parsing so a future format fails with
    // a version error, not a field error.
    let probe: serde_json::Value =
        serde_json::from_str(&first).map_err(|e| Error::DictFormat {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("invalid header: {e}"),
        })?;
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != JSONL_VERSION {
        return Err(Error::Version {
            expected: JSONL_VERSION,
            found: version,
        });
    }
    let header: Header = serde_json::from_str(&first).map_err(|e| Error::DictFormat {
        path: path.to_path_buf(),
        line: 1,
        reason: format!("invalid header: {e}"),
    })?;
    if header.log_base != "e" {
        return Err(Error::DictFormat {
            path: path.to_path_buf(),
            line: 1,
            reason: format!("unsupported log_base {:?}", header.log_base),
        });
    }

    let mut entries: HashMap<String, NgramEntry> = HashMap::with_capacity(header.entries);
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EntryLine = serde_json::from_str(&line).map_err(|e| Error::DictFormat {
            path: path.to_path_buf(),
            line: line_no,
            reason: format!("invalid entry: {e}"),
        })?;
        let gram = parsed.g.into_owned();
        if entries
            .insert(
                gram.clone(),
                NgramEntry {
                    count: parsed.count,
                    pmi: parsed.pmi,
                    le: parsed.le,
                    re: parsed.re,
                },
            )
            .is_some()
        {
            return Err(Error::DictFormat {
                path: path.to_path_buf(),
                line: line_no,
                reason: format!("duplicate gram {gram:?}"),
            });
        }
    }
    if entries.len() != header.entries {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            reason: format!(
                "header declares {} entries, file holds {}",
                header.entries,
                entries.len()
            ),
        });
    }

    Ok(NgramDictionary::from_parts(
        ExtractorConfig {
            max_n: header.max_n,
            min_freq: header.min_freq,
        },
        DictMeta {
            total_chars: header.total_chars,
            corpus: header.corpus,
        },
        entries,
    ))
}

fn write_varint(buf: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            buf.push(byte);
            break;
        }
        buf.push(byte | 0x80);
    }
}

struct ByteCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        if end > self.data.len() {
            return None;
        }
        let slice = &self.data[self.pos..end];
        self.pos = end;
        Some(slice)
    }

    fn read_u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn read_f64(&mut self) -> Option<f64> {
        self.take(8).map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }

    fn read_varint(&mut self) -> Option<u64> {
        let mut v = 0u64;
        let mut shift = 0u32;
        loop {
            let byte = *self.take(1)?.first()?;
            v |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Some(v);
            }
            shift += 7;
            if shift >= 64 {
                return None;
            }
        }
    }
}

fn save_binary(dict: &NgramDictionary, path: &Path) -> Result<()> {
    let sorted = dict.sorted_entries();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(BINARY_VERSION);
    buf.extend_from_slice(&(dict.config().max_n as u64).to_le_bytes());
    buf.extend_from_slice(&dict.config().min_freq.to_le_bytes());
    buf.extend_from_slice(&dict.meta().total_chars.to_le_bytes());
    buf.extend_from_slice(&(sorted.len() as u64).to_le_bytes());
    let corpus = dict.meta().corpus.as_bytes();
    write_varint(&mut buf, corpus.len() as u64);
    buf.extend_from_slice(corpus);
    for (gram, e) in &sorted {
        let bytes = gram.as_bytes();
        write_varint(&mut buf, bytes.len() as u64);
        buf.extend_from_slice(bytes);
        write_varint(&mut buf, e.count);
        buf.extend_from_slice(&e.pmi.to_le_bytes());
        buf.extend_from_slice(&e.le.to_le_bytes());
        buf.extend_from_slice(&e.re.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    write_atomic(path, |w| w.write_all(&buf))
}

fn load_binary(path: &Path) -> Result<NgramDictionary> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = || Error::Integrity {
        path: path.to_path_buf(),
        reason: "file truncated".into(),
    };

    if data.len() < MAGIC.len() + 1 + 32 {
        return Err(truncated());
    }
    let (payload, trailer) = data.split_at(data.len() - 32);
    let digest = Sha256::digest(payload);
    if digest.as_slice() != trailer {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            reason: "checksum mismatch".into(),
        });
    }

    let mut cur = ByteCursor {
        data: payload,
        pos: 0,
    };
    if cur.take(4) != Some(MAGIC.as_slice()) {
        return Err(Error::DictFormat {
            path: path.to_path_buf(),
            line: 0,
            reason: "bad magic".into(),
        });
    }
    let version = *cur.take(1).ok_or_else(truncated)?.first().unwrap();
    if version != BINARY_VERSION {
        return Err(Error::Version {
            expected: BINARY_VERSION as u32,
            found: version as u32,
        });
    }
    let max_n = cur.read_u64().ok_or_else(truncated)? as usize;
    let min_freq = cur.read_u64().ok_or_else(truncated)?;
    let total_chars = cur.read_u64().ok_or_else(truncated)?;
    let n_entries = cur.read_u64().ok_or_else(truncated)? as usize;
    let corpus_len = cur.read_varint().ok_or_else(truncated)? as usize;
    let corpus = std::str::from_utf8(cur.take(corpus_len).ok_or_else(truncated)?)
        .map_err(|_| Error::DictFormat {
            path: path.to_path_buf(),
            line: 0,
            reason: "corpus id is not UTF-8".into(),
        })?
        .to_string();

    let mut entries = HashMap::with_capacity(n_entries);
    for i in 0..n_entries {
        let malformed = |reason: String| Error::DictFormat {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let glen = cur.read_varint().ok_or_else(truncated)? as usize;
        let gram = std::str::from_utf8(cur.take(glen).ok_or_else(truncated)?)
            .map_err(|_| malformed("gram is not UTF-8".into()))?
            .to_string();
        let count = cur.read_varint().ok_or_else(truncated)?;
        let pmi = cur.read_f64().ok_or_else(truncated)?;
        let le = cur.read_f64().ok_or_else(truncated)?;
        let re = cur.read_f64().ok_or_else(truncated)?;
        if entries
            .insert(gram.clone(), NgramEntry { count, pmi, le, re })
            .is_some()
        {
            return Err(malformed(format!("duplicate gram {gram:?}")));
        }
    }
    if cur.pos != payload.len() {
        return Err(Error::Integrity {
            path: path.to_path_buf(),
            reason: "trailing bytes after final entry".into(),
        });
    }

    Ok(NgramDictionary::from_parts(
        ExtractorConfig { max_n, min_freq },
        DictMeta {
            total_chars,
            corpus,
        },
        entries,
    ))
}
