//! Diversity metrics over symbol histograms, token corpora, embeddings and
//! real-valued samples.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiversityError {
    #[error("histogram has no observations")]
    EmptyHistogram,
    #[error("corpus contains no {0}-grams")]
    NoNgrams(usize),
    #[error("need at least two vectors, got {0}")]
    TooFew(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no samples")]
    EmptySamples,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Counts per symbol. Zero-count bins are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram<K: Ord> {
    bins: BTreeMap<K, u64>,
    total: u64,
}

impl<K: Ord> Default for Histogram<K> {
    fn default() -> Self {
        Self {
            bins: BTreeMap::new(),
            total: 0,
        }
    }
}

impl<K: Ord> Histogram<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: K, count: u64) {
        if count == 0 {
            return;
        }
        *self.bins.entry(key).or_insert(0) += count;
        self.total += count;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn get(&self, key: &K) -> u64 {
        self.bins.get(key).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, u64)> {
        self.bins.iter().map(|(k, c)| (k, *c))
    }
}

impl<K: Ord> FromIterator<K> for Histogram<K> {
    fn from_iter<I: IntoIterator<Item = K>>(iter: I) -> Self {
        let mut h = Self::new();
        for k in iter {
            h.add(k, 1);
        }
        h
    }
}

/// Shannon entropy in bits with `p = count / total`.
pub fn shannon_entropy<K: Ord>(h: &Histogram<K>) -> Result<f64, DiversityError> {
    if h.total == 0 {
        return Err(DiversityError::EmptyHistogram);
    }
    let total = h.total as f64;
    let probabilities = h.bins.values().map(|&c| c as f64 / total);
    Ok(entropy_bits(probabilities))
}

/// `-Σ p log2 p` over the given probabilities, skipping zeros.
pub fn entropy_bits(probabilities: impl IntoIterator<Item = f64>) -> f64 {
    let h: f64 = probabilities
        .into_iter()
        .filter(|p| *p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    // -0.0 for a single certain symbol
    h.max(0.0)
}

/// Ratio of distinct n-grams to total n-grams; n-grams never span sequences.
pub fn distinct_n<S, T>(corpus: &[S], n: usize) -> Result<f64, DiversityError>
where
    S: AsRef<[T]>,
    T: Eq + Hash,
{
    if n == 0 {
        return Err(DiversityError::InvalidParameter("n must be positive".into()));
    }
    let mut seen: HashSet<&[T]> = HashSet::new();
    let mut total = 0usize;
    for seq in corpus {
        for gram in seq.as_ref().windows(n) {
            seen.insert(gram);
            total += 1;
        }
    }
    if total == 0 {
        return Err(DiversityError::NoNgrams(n));
    }
    Ok(seen.len() as f64 / total as f64)
}

/// Whitespace tokenization, lower-cased.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// Mean of `1 - cos(a, b)` over all unordered pairs.
pub fn embedding_dispersion(vectors: &[EmbeddingVector]) -> Result<f64, DiversityError> {
    if vectors.len() < 2 {
        return Err(DiversityError::TooFew(vectors.len()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let sim = cosine_similarity(&vectors[i], &vectors[j]).map_err(|e| match e {
                EmbeddingError::DimensionMismatch { left, right } => DiversityError::DimensionMismatch { left, right },
                other => DiversityError::InvalidParameter(other.to_string()),
            })?;
            sum += 1.0 - sim;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Fraction of samples with `|x - mu0| > k * sigma0`.
pub fn tail_mass(samples: &[f64], mu0: f64, sigma0: f64, k: f64) -> Result<f64, DiversityError> {
    if samples.is_empty() {
        return Err(DiversityError::EmptySamples);
    }
    if sigma0 <= 0.0 || !sigma0.is_finite() {
        return Err(DiversityError::InvalidParameter(format!("sigma0 = {sigma0}")));
    }
    if k.is_nan() || k <= 0.0 {
        return Err(DiversityError::InvalidParameter(format!("k = {k}")));
    }
    let bound = k * sigma0;
    let outside = samples.iter().filter(|x| (*x - mu0).abs() > bound).count();
    Ok(outside as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiversityReport {
    pub shannon_entropy_bits: f64,
    pub distinct_1: f64,
    pub distinct_2: f64,
    pub embedding_dispersion: f64,
    pub tail_mass: f64,
}

/// Reference length distribution used for the tail-mass component of a text
/// report: texts whose token count is beyond `k` standard deviations of the
/// reference mean count as tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthReference {
    pub mean: f64,
    pub std_dev: f64,
    pub k: f64,
}

impl LengthReference {
    pub fn from_texts<S: AsRef<str>>(texts: &[S], k: f64) -> Option<Self> {
        let lengths: Vec<f64> = texts.iter().map(|t| tokenize(t.as_ref()).len() as f64).collect();
        if lengths.len() < 2 {
            return None;
        }
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<f64>() / n;
        let var = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        (var > 0.0).then(|| Self {
            mean,
            std_dev: var.sqrt(),
            k,
        })
    }
}

impl DiversityReport {
    /// Report over a window of texts and their embeddings. Components that are
    /// undefined for the window (too short, too few texts) are reported as 0.
    pub fn for_texts<S: AsRef<str>>(
        texts: &[S],
        vectors: &[EmbeddingVector],
        reference: Option<&LengthReference>,
    ) -> Self {
        let corpus: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        let unigrams: Histogram<&str> = corpus.iter().flatten().map(String::as_str).collect();
        let lengths: Vec<f64> = corpus.iter().map(|c| c.len() as f64).collect();
        Self {
            shannon_entropy_bits: shannon_entropy(&unigrams).unwrap_or(0.0),
            distinct_1: distinct_n(&corpus, 1).unwrap_or(0.0),
            distinct_2: distinct_n(&corpus, 2).unwrap_or(0.0),
            embedding_dispersion: embedding_dispersion(vectors).unwrap_or(0.0),
            tail_mass: reference
                .and_then(|r| tail_mass(&lengths, r.mean, r.std_dev, r.k).ok())
                .unwrap_or(0.0),
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.shannon_entropy_bits,
            self.distinct_1,
            self.distinct_2,
            self.embedding_dispersion,
            self.tail_mass,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Parse the `key=value` block written by `Display`.
    pub fn parse_kv(block: &str) -> Option<Self> {
        let mut report = Self::default();
        let mut seen = 0;
        for pair in block.split_whitespace() {
            let (key, value) = pair.split_once('=')?;
            let value: f64 = value.parse().ok()?;
            let slot = match key {
                "shannon_entropy_bits" => &mut report.shannon_entropy_bits,
                "distinct_1" => &mut report.distinct_1,
                "distinct_2" => &mut report.distinct_2,
                "embedding_dispersion" => &mut report.embedding_dispersion,
                "tail_mass" => &mut report.tail_mass,
                _ => continue,
            };
            *slot = value;
            seen += 1;
        }
        (seen == 5).then_some(report)
    }
}

impl fmt::Display for DiversityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "shannon_entropy_bits={} distinct_1={} distinct_2={} embedding_dispersion={} tail_mass={}",
            self.shannon_entropy_bits, self.distinct_1, self.distinct_2, self.embedding_dispersion, self.tail_mass
        )
    }
}
