use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::normalized;
use crate::error::{Error, Result};
use crate::text;

/// Maps text to a unit-norm vector of fixed width.
///
/// Implementations must be deterministic: equal strings give bitwise equal
/// vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Hashed bag-of-words encoder.
///
/// Every lowercased word token owns a Gaussian direction drawn from a
/// ChaCha stream keyed by `sha256(seed || token)`. A text embeds to the
/// normalized sum of its token directions, so texts sharing vocabulary land
/// close together while the whole thing stays free of any model runtime.
#[derive(Debug)]
pub struct DeterministicProvider {
    dim: usize,
    seed: u64,
    directions: RwLock<HashMap<String, Arc<[f64]>>>,
}

/// Token directions kept in memory; beyond this, new tokens are recomputed.
const DIRECTION_CACHE_CAP: usize = 1 << 16;

impl DeterministicProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding width must be positive");
        Self {
            dim,
            seed,
            directions: RwLock::new(HashMap::new()),
        }
    }

    fn draw(&self, token: &str) -> Arc<[f64]> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(key);
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn direction(&self, token: &str) -> Arc<[f64]> {
        if let Some(v) = self.directions.read().expect("cache poisoned").get(token) {
            return Arc::clone(v);
        }
        let v = self.draw(token);
        let mut cache = self.directions.write().expect("cache poisoned");
        if cache.len() < DIRECTION_CACHE_CAP {
            cache.insert(token.to_string(), Arc::clone(&v));
        }
        v
    }

    fn add_token(&self, token: &str, acc: &mut [f64]) {
        for (a, z) in acc.iter_mut().zip(self.direction(token).iter()) {
            *a += z;
        }
    }
}

impl EmbeddingProvider for DeterministicProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.dim];
        let tokens = text::words(text);
        if tokens.is_empty() {
            self.add_token("", &mut acc);
        }
        for t in &tokens {
            self.add_token(t, &mut acc);
        }
        normalized(acc)
    }
}

/// Looks embeddings up in a precomputed sidecar file keyed by the SHA-256 of
/// the exact input text.
#[derive(Debug, Clone)]
pub struct ExternalProvider {
    dim: usize,
    table: HashMap<[u8; 32], Vec<f64>>,
}

impl ExternalProvider {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let (dim, records) = read_sidecar(path)?;
        let mut table = HashMap::with_capacity(records.len());
        for (hash, v) in records {
            let v = normalized(v.into_iter().map(f64::from).collect()).map_err(|_| {
                Error::Degenerate(format!("sidecar vector {} has zero norm", hex::encode(hash)))
            })?;
            table.insert(hash, v);
        }
        Ok(Self { dim, table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingProvider for ExternalProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let key = text_hash(text);
        self.table
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::MissingEmbedding(hex::encode(key)))
    }
}

pub fn text_hash(text: &str) -> [u8; 32] {
    let mut key = [0u8; 32];
    key.copy_from_slice(&Sha256::digest(text.as_bytes()));
    key
}

const SIDECAR_MAGIC: &[u8; 8] = b"CSNEMB\0\0";
const SIDECAR_VERSION: u32 = 1;

/// Writes a sidecar embedding file.
///
/// Layout, all integers and floats little-endian:
/// `magic[8] | version:u32 | dim:u32 | count:u64 | count x (sha256[32] | dim x f32)`.
pub fn write_sidecar<'a>(
    path: impl AsRef<Path>,
    dim: usize,
    entries: impl IntoIterator<Item = (&'a str, &'a [f32])>,
) -> Result<()> {
    let path = path.as_ref();
    let entries: Vec<_> = entries.into_iter().collect();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(SIDECAR_MAGIC).map_err(io)?;
    w.write_all(&SIDECAR_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(entries.len() as u64).to_le_bytes()).map_err(io)?;
    for (text, v) in entries {
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: v.len(),
            });
        }
        w.write_all(&text_hash(text)).map_err(io)?;
        for x in v {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads a sidecar file into `(dim, [(text hash, vector)])`.
#[allow(clippy::type_complexity)]
pub fn read_sidecar(path: impl AsRef<Path>) -> Result<(usize, Vec<([u8; 32], Vec<f32>)>)> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != SIDECAR_MAGIC {
        return Err(Error::parse(path.display().to_string(), "not an embedding sidecar file"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(io)?;
    let version = u32::from_le_bytes(b4);
    if version != SIDECAR_VERSION {
        return Err(Error::FormatVersion {
            format: "embedding sidecar",
            found: version,
            supported: SIDECAR_VERSION,
        });
    }
    r.read_exact(&mut b4).map_err(io)?;
    let dim = u32::from_le_bytes(b4) as usize;
    if dim == 0 {
        return Err(Error::parse(path.display().to_string(), "zero embedding width"));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(io)?;
    let count = u64::from_le_bytes(b8) as usize;

    let mut out = Vec::with_capacity(count.min(1 << 20));
    let mut row = vec![0u8; dim * 4];
    for _ in 0..count {
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash).map_err(io)?;
        r.read_exact(&mut row).map_err(io)?;
        let v = row
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push((hash, v));
    }
    Ok((dim, out))
}

/// How to reconstruct the text provider for a persisted model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderSpec {
    Deterministic { dim: usize, seed: u64 },
    External { sidecar: PathBuf },
}

impl Default for ProviderSpec {
    fn default() -> Self {
        ProviderSpec::Deterministic {
            dim: super::TEXT_DIM,
            seed: 0x5eed_cafe,
        }
    }
}

impl ProviderSpec {
    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            ProviderSpec::Deterministic { dim, seed } => {
                if *dim == 0 {
                    return Err(Error::Validation("provider dim must be positive".into()));
                }
                Box::new(DeterministicProvider::new(*dim, *seed))
            }
            ProviderSpec::External { sidecar } => Box::new(ExternalProvider::open(sidecar)?),
        })
    }
}
