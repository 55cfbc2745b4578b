//! Sources of dense embeddings for tokens, hashtags and image regions.
//!
//! The default provider is a deterministic stub: the vector for a key is
//! drawn uniformly from [-1, 1] by a generator seeded with a SHA-256 digest
//! of (provider seed, namespace, key). The alternative reads vectors from a
//! precomputed binary table.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::Matrix;

const TOKEN_NS: &str = "token";
const IMAGE_NS: &str = "image";

/// A matrix whose rows are either real items or zero padding.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedMatrix {
    pub values: Matrix,
    pub mask: Vec<bool>,
}

impl MaskedMatrix {
    pub fn real_rows(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Stable 64-bit digest of `(seed, namespace, key)`.
pub fn stable_hash(seed: u64, namespace: &str, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(namespace.as_bytes());
    h.update([0u8]);
    h.update(key.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("32-byte digest"))
}

/// Uniform [-1, 1] vector keyed by `(seed, namespace, key)`.
pub fn stub_vector(seed: u64, namespace: &str, key: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(seed, namespace, key));
    (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

/// Lowercases, splits on whitespace and strips punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| !c.is_ascii_punctuation())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Key → flat vector table loaded from a precomputed feature file.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedTable {
    pub dim: usize,
    pub entries: HashMap<String, Vec<f32>>,
}

impl PrecomputedTable {
    /// Layout (little endian): `u32 dim, u32 count`, then per record
    /// `u32 key_len, key bytes (UTF-8), dim × f32`.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
        };
        let bad = |what: &str| Error::malformed(path, what.to_owned());
        let dim = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let count = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let mut entries = HashMap::with_capacity(count);
        for _ in 0..count {
            let klen = cur.u32().ok_or_else(|| bad("truncated record"))? as usize;
            let key = cur
                .take(klen)
                .and_then(|b| std::str::from_utf8(b).ok())
                .ok_or_else(|| bad("bad key"))?
                .to_owned();
            let values = (0..dim)
                .map(|_| cur.u32().map(f32::from_bits))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| bad("truncated values"))?;
            entries.insert(key, values);
        }
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { dim, entries })
    }

    /// Writes records sorted by key.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        out.extend((self.dim as u32).to_le_bytes());
        out.extend((self.entries.len() as u32).to_le_bytes());
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        for k in keys {
            let v = &self.entries[k];
            if v.len() != self.dim {
                return Err(Error::Shape(format!(
                    "record `{k}` has {} values, table dim is {}",
                    v.len(),
                    self.dim
                )));
            }
            out.extend((k.len() as u32).to_le_bytes());
            out.extend(k.as_bytes());
            for x in v {
                out.extend(x.to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProviderKind {
    DeterministicStub,
    PrecomputedFile(Arc<PrecomputedTable>),
}

/// Pure function from (configuration, key) to a dense vector.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingProvider {
    pub kind: ProviderKind,
    pub seed: u64,
}

impl EmbeddingProvider {
    pub fn stub(seed: u64) -> Self {
        Self {
            kind: ProviderKind::DeterministicStub,
            seed,
        }
    }

    pub fn precomputed(table: PrecomputedTable) -> Self {
        Self {
            kind: ProviderKind::PrecomputedFile(Arc::new(table)),
            seed: 0,
        }
    }

    fn lookup(&self, namespace: &str, key: &str, dim: usize) -> Result<Vec<f64>> {
        match &self.kind {
            ProviderKind::DeterministicStub => Ok(stub_vector(self.seed, namespace, key, dim)),
            ProviderKind::PrecomputedFile(table) => {
                if table.dim != dim {
                    return Err(Error::Shape(format!(
                        "precomputed table has dim {}, requested {dim}",
                        table.dim
                    )));
                }
                table
                    .entries
                    .get(key)
                    .map(|v| v.iter().map(|&x| f64::from(x)).collect())
                    .ok_or_else(|| Error::MissingKey(key.to_owned()))
            }
        }
    }

    /// Embedding of a single token or hashtag.
    pub fn token_vector(&self, token: &str, dim: usize) -> Result<Vec<f64>> {
        self.lookup(TOKEN_NS, token, dim)
    }

    /// Caption tokens as an M×D matrix; padded with zero rows or truncated to M.
    pub fn text_token_embeddings(
        &self,
        caption: &str,
        max_tokens: usize,
        dim: usize,
    ) -> Result<MaskedMatrix> {
        self.rows_for(&tokenize(caption), max_tokens, dim)
    }

    /// Hashtags as an L×D matrix; padded with zero rows or truncated to L.
    pub fn hashtag_embedding_matrix(
        &self,
        hashtags: &[String],
        max_tags: usize,
        dim: usize,
    ) -> Result<MaskedMatrix> {
        self.rows_for(hashtags, max_tags, dim)
    }

    fn rows_for(&self, keys: &[String], rows: usize, dim: usize) -> Result<MaskedMatrix> {
        if rows == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "embedding matrix needs positive shape, got {rows}x{dim}"
            )));
        }
        let mut values = Matrix::zeros(rows, dim);
        let mut mask = vec![false; rows];
        for (i, key) in keys.iter().take(rows).enumerate() {
            values
                .row_mut(i)
                .copy_from_slice(&self.token_vector(key, dim)?);
            mask[i] = true;
        }
        Ok(MaskedMatrix { values, mask })
    }

    /// K×N regional features for an image reference.
    pub fn image_region_features(
        &self,
        image_ref: &str,
        regions: usize,
        channels: usize,
    ) -> Result<Matrix> {
        if regions == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "region matrix needs positive shape, got {regions}x{channels}"
            )));
        }
        let flat = self.lookup(IMAGE_NS, image_ref, regions * channels)?;
        Matrix::from_vec(regions, channels, flat)
    }
}
