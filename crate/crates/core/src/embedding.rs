//! Deterministic text embeddings.
//!
//! Text is lower-cased and whitespace-collapsed, split into character
//! n-grams, and each n-gram is hashed into one of `dimension` buckets with a
//! ±1 sign taken from an independent hash bit. The bucket vector is then
//! L2-normalized.

use std::fmt;
use std::ops::Neg;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::{fnv1a64, splitmix64};

/// Width of the vector index the memory engine is provisioned with.
pub const DEFAULT_DIMENSION: usize = 768;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("text is empty or whitespace-only")]
    EmptyText,
    #[error("bad embedding config: {0}")]
    BadConfig(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("embedding backend failed: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Unit basis vector `e_index` of the given width.
    pub fn basis(dimension: usize, index: usize) -> Self {
        let mut values = vec![0.0; dimension];
        values[index] = 1.0;
        Self { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Indices of the non-zero components.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
    }
}

impl Neg for &EmbeddingVector {
    type Output = EmbeddingVector;

    fn neg(self) -> EmbeddingVector {
        EmbeddingVector::new(self.values.iter().map(|v| -v).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dimension: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            ngram_min: 3,
            ngram_max: 5,
            seed: 0x005e_ed0f_e3be,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dimension < 2 {
            return Err(EmbeddingError::BadConfig(format!(
                "dimension must be >= 2, got {}",
                self.dimension
            )));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(EmbeddingError::BadConfig(format!(
                "need 1 <= ngram_min <= ngram_max, got {}..={}",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }
}

/// Lower-case and collapse whitespace runs to a single space.
pub fn normalize_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Character n-grams of the normalized text for every n in the configured
/// range. Texts shorter than `ngram_min` contribute themselves as one gram.
pub fn char_ngrams(normalized: &str, ngram_min: usize, ngram_max: usize) -> Vec<String> {
    let chars: Vec<char> = normalized.chars().collect();
    if chars.len() < ngram_min {
        return vec![normalized.to_string()];
    }
    let mut grams = Vec::new();
    for n in ngram_min..=ngram_max.min(chars.len()) {
        for window in chars.windows(n) {
            grams.push(window.iter().collect());
        }
    }
    grams
}

fn bucket_and_sign(gram: &str, config: &EmbeddingConfig) -> (usize, f64) {
    let h = fnv1a64(config.seed, gram.as_bytes());
    let bucket = (h % config.dimension as u64) as usize;
    let sign = if splitmix64(h) >> 63 == 1 { -1.0 } else { 1.0 };
    (bucket, sign)
}

/// Embed `text` with the feature-hashing scheme described at module level.
pub fn embed(text: &str, config: &EmbeddingConfig) -> Result<EmbeddingVector, EmbeddingError> {
    config.validate()?;
    let normalized = normalize_text(text);
    if normalized.is_empty() {
        return Err(EmbeddingError::EmptyText);
    }
    let mut values = vec![0.0f64; config.dimension];
    for gram in char_ngrams(&normalized, config.ngram_min, config.ngram_max) {
        let (bucket, sign) = bucket_and_sign(&gram, config);
        values[bucket] += sign;
    }
    if values.iter().all(|v| *v == 0.0) {
        // every gram cancelled against another; fall back to the whole text as one gram
        let (bucket, sign) = bucket_and_sign(&normalized, config);
        values[bucket] = sign;
    }
    let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
    for v in values.iter_mut() {
        *v /= norm;
    }
    Ok(EmbeddingVector::new(values))
}

/// Cosine similarity clamped to [-1, 1]. A zero vector has similarity 0 with
/// everything.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

/// Anything that turns text into vectors of a fixed width under the same
/// contract as [`embed`].
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError>;
}

#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    config: EmbeddingConfig,
}

impl HashedEmbedder {
    pub fn new(config: EmbeddingConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.config
    }
}

impl Embedder for HashedEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        embed(text, &self.config)
    }
}

pub type Transport = dyn Fn(&str) -> Result<Vec<f64>, String> + Send + Sync;

/// Adapter for an out-of-process embedding service. The transport returns raw
/// component values; width is checked and the result re-normalized here so the
/// adapter honors the same contract as the hashed engine.
pub struct RemoteStubEmbedder {
    dimension: usize,
    transport: Box<Transport>,
}

impl RemoteStubEmbedder {
    pub fn new(dimension: usize, transport: Box<Transport>) -> Self {
        Self { dimension, transport }
    }

    /// A transport that answers locally with the hashed engine.
    pub fn loopback(config: EmbeddingConfig) -> Result<Self, EmbeddingError> {
        config.validate()?;
        let transport = move |text: &str| {
            embed(text, &config)
                .map(EmbeddingVector::into_values)
                .map_err(|e| e.to_string())
        };
        Ok(Self::new(config.dimension, Box::new(transport)))
    }
}

impl fmt::Debug for RemoteStubEmbedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteStubEmbedder")
            .field("dimension", &self.dimension)
            .finish_non_exhaustive()
    }
}

impl Embedder for RemoteStubEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.trim().is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let mut values = (self.transport)(text).map_err(EmbeddingError::Backend)?;
        if values.len() != self.dimension {
            return Err(EmbeddingError::DimensionMismatch {
                left: self.dimension,
                right: values.len(),
            });
        }
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(EmbeddingError::Backend("degenerate vector".into()));
        }
        for v in values.iter_mut() {
            *v /= norm;
        }
        Ok(EmbeddingVector::new(values))
    }
}

/// Value of the `embedding.backend` configuration key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingBackend {
    #[default]
    Hashed,
    RemoteStub,
}

impl FromStr for EmbeddingBackend {
    type Err = EmbeddingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hashed" => Ok(Self::Hashed),
            "remote-stub" => Ok(Self::RemoteStub),
            other => Err(EmbeddingError::BadConfig(format!("unknown backend {other:?}"))),
        }
    }
}

impl fmt::Display for EmbeddingBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Hashed => "hashed",
            Self::RemoteStub => "remote-stub",
        })
    }
}

pub fn build_embedder(backend: EmbeddingBackend, config: EmbeddingConfig) -> Result<Arc<dyn Embedder>, EmbeddingError> {
    Ok(match backend {
        EmbeddingBackend::Hashed => Arc::new(HashedEmbedder::new(config)?),
        EmbeddingBackend::RemoteStub => Arc::new(RemoteStubEmbedder::loopback(config)?),
    })
}
