//! Binary checkpoint: configuration, PCA model and named parameters.
//!
//! Layout (little endian): magic, format version, value precision, config
//! digest, config text, feature-cache digest, PCA model, parameter count,
//! then `(name, rows, cols, values)` records, followed by a SHA-256 of all
//! preceding bytes.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::network::Model;
use crate::error::{Error, Result};
use crate::features::PcaModel;
use crate::nn::{Matrix, ParamStore};

pub const MAGIC: &[u8; 8] = b"MMPOPCKP";
pub const FORMAT_VERSION: u32 = 1;

/// Storage width for floating-point values. 64-bit round trips exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    fn tag(self) -> u8 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub pca: PcaModel,
    /// Digest of the feature cache the model was trained against.
    pub cache_digest: String,
}

struct Writer {
    buf: Vec<u8>,
    precision: Precision,
}

impl Writer {
    fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len());
        self.buf.extend_from_slice(b);
    }

    fn values(&mut self, v: &[f64]) {
        for &x in v {
            match self.precision {
                Precision::F64 => self.buf.extend_from_slice(&x.to_le_bytes()),
                Precision::F32 => self.buf.extend_from_slice(&(x as f32).to_le_bytes()),
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    precision: Precision,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| corrupt("unexpected end of file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()?;
        self.take(n)
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| corrupt("invalid UTF-8 string"))
    }

    fn values(&mut self, n: usize) -> Result<Vec<f64>> {
        let width = match self.precision {
            Precision::F32 => 4,
            Precision::F64 => 8,
        };
        let raw = self.take(
            n.checked_mul(width)
                .ok_or_else(|| corrupt("size overflow"))?,
        )?;
        Ok(raw
            .chunks_exact(width)
            .map(|c| match self.precision {
                Precision::F32 => f32::from_le_bytes(c.try_into().unwrap()) as f64,
                Precision::F64 => f64::from_le_bytes(c.try_into().unwrap()),
            })
            .collect())
    }

    fn matrix(&mut self) -> Result<Matrix> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| corrupt("size overflow"))?;
        Matrix::from_vec(rows, cols, self.values(n)?)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self, precision: Precision) -> Vec<u8> {
        let mut w = Writer {
            buf: Vec::new(),
            precision,
        };
        w.buf.extend_from_slice(MAGIC);
        w.buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.buf.push(precision.tag());
        w.buf.extend_from_slice(&self.model.config.digest());
        w.bytes(self.model.config.to_text().as_bytes());
        w.bytes(self.cache_digest.as_bytes());

        let pca = &self.pca;
        w.u32(pca.output_dim());
        w.u32(pca.input_dim());
        w.values(&pca.mean);
        w.values(&pca.explained_variance);
        w.values(pca.components.as_slice());

        w.u32(self.model.params.len());
        for (name, m) in self.model.params.iter() {
            w.bytes(name.as_bytes());
            w.u32(m.rows());
            w.u32(m.cols());
            w.values(m.as_slice());
        }
        let sum = Sha256::digest(&w.buf);
        w.buf.extend_from_slice(&sum);
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let mut r = Reader {
            buf,
            pos: MAGIC.len(),
            precision: Precision::F64,
        };
        let version = r.u32()? as u32;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if buf.len() < 32 {
            return Err(corrupt("file too short"));
        }
        let (body, sum) = buf.split_at(buf.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(corrupt("checksum mismatch"));
        }
        r.buf = body;
        r.precision = match r.take(1)?[0] {
            32 => Precision::F32,
            64 => Precision::F64,
            p => return Err(corrupt(format!("unknown precision tag {p}"))),
        };
        let digest = r.take(32)?.to_vec();
        let text = r.string()?;
        let config = ModelConfig::from_text(&text)
            .map_err(|e| corrupt(format!("embedded configuration: {e}")))?;
        if config.digest().as_slice() != digest {
            return Err(corrupt("configuration digest does not match its text"));
        }
        let cache_digest = r.string()?;

        let k = r.u32()?;
        let d = r.u32()?;
        let mean = r.values(d)?;
        let explained_variance = r.values(k)?;
        let components = Matrix::from_vec(k, d, r.values(k.saturating_mul(d))?)?;
        let pca = PcaModel {
            mean,
            components,
            explained_variance,
        };

        let count = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name = r.string()?;
            let m = r.matrix()?;
            params.insert(name, m).map_err(|e| corrupt(e.to_string()))?;
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes after parameters"));
        }
        let expected = Model::zeros(config.clone())?;
        expected
            .params
            .check_layout(&params)
            .map_err(|e| corrupt(format!("parameters do not fit the configuration: {e}")))?;
        Ok(Self {
            model: Model { config, params },
            pca,
            cache_digest,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes(precision)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Loads and rejects checkpoints written for a different configuration.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        let diff = ck.model.config.diff(expected);
        if !diff.is_empty() {
            return Err(Error::ConfigMismatch(format!(
                "differing keys (checkpoint vs expected): {}",
                diff.join(", ")
            )));
        }
        Ok(ck)
    }
}
