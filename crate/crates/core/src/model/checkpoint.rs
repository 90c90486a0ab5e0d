//! Checkpoint persistence.
//!
//! Layout: one JSON header line (format version, model config, optional
//! normalizer, optional optimizer step, optional CRF metadata), then named
//! tensor blocks — `[u32 name length][name][u8 rank][u64 dims…][f64 data…]`,
//! everything little-endian. Tensors round-trip bit-exactly. Shapes are
//! recomputed from the header config on load and checked against every
//! block, so a tampered header fails loudly instead of mis-shaping tensors.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::boundary::Normalizer;
use crate::corpus::write_atomic;
use crate::error::{Error, Result};

use super::adam::AdamState;
use super::params::ToyEncoderParams;
use super::ModelConfig;

const FORMAT_VERSION: u32 = 1;

/// CRF head attached to a fine-tuned encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfBundle {
    pub scheme: String,
    pub tags: Vec<String>,
    /// `d_model × tags` emission projection.
    pub emission_w: Array2<f64>,
    pub emission_b: Array1<f64>,
    /// `tags × tags` transition scores.
    pub transitions: Array2<f64>,
    pub start: Array1<f64>,
    pub stop: Array1<f64>,
}

/// Everything a checkpoint carries.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ToyEncoderParams,
    pub normalizer: Option<Normalizer>,
    pub optimizer: Option<AdamState>,
    pub crf: Option<CrfBundle>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct CrfMeta {
    scheme: String,
    tags: Vec<String>,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    normalizer: Option<Normalizer>,
    optimizer_step: Option<u64>,
    crf: Option<CrfMeta>,
}

fn write_block(buf: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.push(shape.len() as u8);
    for &d in shape {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in data {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

/// Writes a checkpoint atomically.
pub fn save_checkpoint(checkpoint: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        format_version: FORMAT_VERSION,
        config: checkpoint.config.clone(),
        normalizer: checkpoint.normalizer.clone(),
        optimizer_step: checkpoint.optimizer.as_ref().map(|o| o.step),
        crf: checkpoint.crf.as_ref().map(|c| CrfMeta {
            scheme: c.scheme.clone(),
            tags: c.tags.clone(),
        }),
    };

    let mut buf = Vec::new();
    for (name, t) in checkpoint.params.named_tensors() {
        write_block(&mut buf, &name, &t.shape(), t.flat());
    }
    if let Some(opt) = &checkpoint.optimizer {
        for (name, t) in checkpoint.params.named_tensors() {
            let m = &opt.m[&name];
            let v = &opt.v[&name];
            write_block(&mut buf, &format!("adam.m.{name}"), &t.shape(), m);
            write_block(&mut buf, &format!("adam.v.{name}"), &t.shape(), v);
        }
    }
    if let Some(crf) = &checkpoint.crf {
        write_block(
            &mut buf,
            "crf.emission_w",
            &[crf.emission_w.nrows(), crf.emission_w.ncols()],
            crf.emission_w.as_slice().unwrap(),
        );
        write_block(
            &mut buf,
            "crf.emission_b",
            &[crf.emission_b.len()],
            crf.emission_b.as_slice().unwrap(),
        );
        write_block(
            &mut buf,
            "crf.transitions",
            &[crf.transitions.nrows(), crf.transitions.ncols()],
            crf.transitions.as_slice().unwrap(),
        );
        write_block(&mut buf, "crf.start", &[crf.start.len()], crf.start.as_slice().unwrap());
        write_block(&mut buf, "crf.stop", &[crf.stop.len()], crf.stop.as_slice().unwrap());
    }

    write_atomic(path, move |w| {
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        w.write_all(&buf)
    })
}

struct BlockReader<R: Read> {
    inner: R,
}

impl<R: Read> BlockReader<R> {
    fn read_exact_or(&mut self, buf: &mut [u8], path: &Path) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: "unexpected end of file in tensor block".into(),
        })
    }

    /// Reads one block and checks its name and shape against expectations.
    fn expect_block(&mut self, path: &Path, name: &str, shape: &[usize]) -> Result<Vec<f64>> {
        let mut len4 = [0u8; 4];
        self.read_exact_or(&mut len4, path)?;
        let name_len = u32::from_le_bytes(len4) as usize;
        let mut name_buf = vec![0u8; name_len];
        self.read_exact_or(&mut name_buf, path)?;
        let got_name = String::from_utf8(name_buf).map_err(|_| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: "tensor name is not UTF-8".into(),
        })?;
        if got_name != name {
            return Err(Error::Checkpoint {
                path: path.to_path_buf(),
                reason: format!("expected tensor {name:?}, found {got_name:?}"),
            });
        }
        let mut rank = [0u8; 1];
        self.read_exact_or(&mut rank, path)?;
        let mut got_shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            let mut d8 = [0u8; 8];
            self.read_exact_or(&mut d8, path)?;
            got_shape.push(u64::from_le_bytes(d8) as usize);
        }
        if got_shape != shape {
            return Err(Error::Shape {
                what: format!("checkpoint tensor {name}"),
                expected: shape.to_vec(),
                got: got_shape,
            });
        }
        let count: usize = shape.iter().product();
        let mut data = vec![0f64; count];
        for x in data.iter_mut() {
            let mut f8 = [0u8; 8];
            self.read_exact_or(&mut f8, path)?;
            *x = f64::from_le_bytes(f8);
        }
        Ok(data)
    }
}

/// Loads a checkpoint, validating version, tensor names, and shapes.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);

    let mut header_bytes = Vec::new();
    {
        let mut byte = [0u8; 1];
        loop {
            reader.read_exact(&mut byte).map_err(|_| Error::Checkpoint {
                path: path.to_path_buf(),
                reason: "missing header line".into(),
            })?;
            if byte[0] == b'\n' {
                break;
            }
            header_bytes.push(byte[0]);
        }
    }
    let probe: serde_json::Value =
        serde_json::from_slice(&header_bytes).map_err(|e| Error::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("invalid header: {e}"),
        })?;
    let version = probe
        .get("format_version")
        .and_then(|v| v.as_u64())
        .unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let header: Header = serde_json::from_slice(&header_bytes).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        reason: format!("invalid header: {e}"),
    })?;
    header.config.validate()?;

    let mut blocks = BlockReader { inner: reader };
    let mut params = ToyEncoderParams::zeros(&header.config);
    for (name, t) in params.named_tensors_mut() {
        let data = blocks.expect_block(path, &name, &t.shape())?;
        t.flat_mut().copy_from_slice(&data);
    }

    let optimizer = if let Some(step) = header.optimizer_step {
        let mut m = HashMap::new();
        let mut v = HashMap::new();
        for (name, t) in params.named_tensors() {
            let shape = t.shape();
            m.insert(name.clone(), blocks.expect_block(path, &format!("adam.m.{name}"), &shape)?);
            v.insert(name.clone(), blocks.expect_block(path, &format!("adam.v.{name}"), &shape)?);
        }
        Some(AdamState { step, m, v })
    } else {
        None
    };

    let crf = if let Some(meta) = header.crf {
        let d = header.config.d_model;
        let t = meta.tags.len();
        let ew = blocks.expect_block(path, "crf.emission_w", &[d, t])?;
        let eb = blocks.expect_block(path, "crf.emission_b", &[t])?;
        let tr = blocks.expect_block(path, "crf.transitions", &[t, t])?;
        let st = blocks.expect_block(path, "crf.start", &[t])?;
        let sp = blocks.expect_block(path, "crf.stop", &[t])?;
        Some(CrfBundle {
            scheme: meta.scheme,
            tags: meta.tags,
            emission_w: Array2::from_shape_vec((d, t), ew).expect("shape checked"),
            emission_b: Array1::from_vec(eb),
            transitions: Array2::from_shape_vec((t, t), tr).expect("shape checked"),
            start: Array1::from_vec(st),
            stop: Array1::from_vec(sp),
        })
    } else {
        None
    };

    let mut trailing = [0u8; 1];
    if blocks.inner.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            reason: "trailing bytes after final tensor block".into(),
        });
    }

    Ok(Checkpoint {
        config: header.config,
        params,
        normalizer: header.normalizer,
        optimizer,
        crf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, Vocab};

    fn make_checkpoint() -> Checkpoint {
        let vocab = Vocab::from_chars(vec!['a', 'b', 'c']);
        let mut config = ModelConfig::new(vocab, 7, 21);
        config.d_model = 8;
        config.num_layers = 2;
        config.num_heads = 2;
        config.ffn_dim = 12;
        config.max_len = 16;
        let params = ToyEncoderParams::init(&config);
        let optimizer = AdamState::new(&params);
        Checkpoint {
            config,
            params,
            normalizer: Some(Normalizer {
                mean: vec![0.5; 7],
                std: vec![1.25; 7],
                clamped_dims: vec![3],
                fitted_on: "test".into(),
            }),
            optimizer: Some(optimizer),
            crf: None,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = make_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt, loaded);

        // forward outputs exactly equal
        let ids = [3u32, 4, 5, 3];
        let a = forward(&ckpt.params, &ckpt.config, &ids);
        let b = forward(&loaded.params, &loaded.config, &ids);
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn crf_bundle_round_trips() {
        let mut ckpt = make_checkpoint();
        ckpt.optimizer = None;
        ckpt.crf = Some(CrfBundle {
            scheme: "bmes".into(),
            tags: vec!["B".into(), "M".into(), "E".into(), "S".into()],
            emission_w: Array2::from_shape_fn((8, 4), |(i, j)| i as f64 - j as f64 * 0.5),
            emission_b: Array1::from_vec(vec![0.1, -0.2, 0.3, 0.0]),
            transitions: Array2::from_shape_fn((4, 4), |(i, j)| (i * 4 + j) as f64 * 0.01),
            start: Array1::zeros(4),
            stop: Array1::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crf.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(ckpt, loaded);
    }

    #[test]
    fn altered_d_model_in_header_is_an_error() {
        let ckpt = make_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        let tampered = text.replacen("\"d_model\":8", "\"d_model\":16", 1);
        std::fs::write(&path, tampered.as_bytes()).unwrap();

        let err = load_checkpoint(&path).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }), "{err}");
    }

    #[test]
    fn unknown_version_is_rejected() {
        let ckpt = make_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        let tampered = text.replacen("\"format_version\":1", "\"format_version\":3", 1);
        std::fs::write(&path, tampered.as_bytes()).unwrap();
        assert!(matches!(
            load_checkpoint(&path).unwrap_err(),
            Error::Version { .. }
        ));
    }

    #[test]
    fn truncated_checkpoint_is_an_error() {
        let ckpt = make_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
