//! Embedding vectors, the backend interface, and a deterministic
//! feature-hashing embedder used offline and in tests.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::hash::Fnv1a;

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingError {
    EmptyText { index: usize },
    EmptyVector,
    NonFinite,
    ZeroVector,
    DimensionMismatch { expected: usize, found: usize },
    Backend(String),
}

impl fmt::Display for EmbeddingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingError::EmptyText { index } => write!(f, "text #{index} is empty"),
            EmbeddingError::EmptyVector => f.write_str("embedding has zero dimensions"),
            EmbeddingError::NonFinite => f.write_str("embedding contains a non-finite value"),
            EmbeddingError::ZeroVector => f.write_str("embedding is all zeros; cosine undefined"),
            EmbeddingError::DimensionMismatch { expected, found } => {
                write!(f, "embedding dimension {found} does not match store dimension {expected}")
            }
            EmbeddingError::Backend(msg) => write!(f, "embedding backend failed: {msg}"),
        }
    }
}

impl core::error::Error for EmbeddingError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Trajectory without its last check-in.
    Key,
    /// Whole trajectory.
    Query,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Key => 0,
            Role::Query => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Role::Key),
            1 => Some(Role::Query),
            _ => None,
        }
    }
}

/// A validated embedding: non-empty, finite and not all-zero.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    pub source_id: u64,
    pub role: Role,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>, source_id: u64, role: Role) -> Result<Self, EmbeddingError> {
        check_values(&values)?;
        Ok(EmbeddingVector { values, source_id, role })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }
}

pub fn check_values(values: &[f32]) -> Result<(), EmbeddingError> {
    if values.is_empty() {
        return Err(EmbeddingError::EmptyVector);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFinite);
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok(())
}

/// Anything that can turn prompt texts into fixed-dimension vectors.
///
/// Output order must match input order, and one instance must map equal texts
/// to equal vectors.
pub trait EmbeddingBackend {
    type Error: From<EmbeddingError>;

    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, Self::Error>;
}

/// Signed feature hashing of character trigrams, L2-normalised.
///
/// Strings shorter than three characters hash as a single feature. Uses only
/// FNV-1a and integer arithmetic, so results are identical across platforms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub const DEFAULT_DIM: usize = 256;
    pub const NGRAM: usize = 3;

    pub fn new(dim: usize, seed: u64) -> Self {
        HashingEmbedder { dim: dim.max(1), seed }
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f32>, EmbeddingError> {
        if text.is_empty() {
            return Err(EmbeddingError::EmptyText { index: 0 });
        }
        let mut acc = alloc::vec![0f64; self.dim];
        let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain(core::iter::once(text.len())).collect();
        let chars = bounds.len() - 1;
        let mut add = |gram: &str| {
            let mut h = Fnv1a::with_seed(self.seed);
            h.write(gram.as_bytes());
            let h = h.finish();
            let idx = (h % self.dim as u64) as usize;
            acc[idx] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        };
        if chars < Self::NGRAM {
            add(text);
        } else {
            for i in 0..=chars - Self::NGRAM {
                add(&text[bounds[i]..bounds[i + Self::NGRAM]]);
            }
        }
        let norm = libm::sqrt(acc.iter().map(|v| v * v).sum::<f64>());
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        Ok(acc.into_iter().map(|v| (v / norm) as f32).collect())
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(Self::DEFAULT_DIM, 0)
    }
}

impl EmbeddingBackend for HashingEmbedder {
    type Error = EmbeddingError;

    fn name(&self) -> &str {
        "hashing-trigram"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                self.embed_one(t).map_err(|e| match e {
                    EmbeddingError::EmptyText { .. } => EmbeddingError::EmptyText { index },
                    other => other,
                })
            })
            .collect()
    }
}
