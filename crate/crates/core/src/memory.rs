//! The vector memory: upsert, exact top-k cosine retrieval, near-duplicate
//! admission screening and checksummed snapshots.
//!
//! Retrieval is a full scan. Results are ordered by non-increasing similarity
//! with ties broken by ascending id, so every query has exactly one correct
//! answer.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diversity::embedding_dispersion;
use crate::embedding::{cosine_similarity, Embedder, EmbeddingConfig, EmbeddingError, EmbeddingVector, HashedEmbedder};
use crate::hashing::sha256_hex;

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_MAX_SIMILARITY: f64 = 0.98;

const SNAPSHOT_MAGIC: &str = "memstore v1";

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("vector has dimension {got}, store expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("text is empty or whitespace-only")]
    EmptyText,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("top_k must be positive")]
    ZeroTopK,
    #[error(transparent)]
    Embedding(EmbeddingError),
    #[error("snapshot I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

impl From<EmbeddingError> for MemoryError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::EmptyText => MemoryError::EmptyText,
            other => MemoryError::Embedding(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Human,
    Agent,
    PlatformFeedback,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Human => "human",
            Source::Agent => "agent",
            Source::PlatformFeedback => "platform-feedback",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Source::Human),
            "agent" => Ok(Source::Agent),
            "platform-feedback" => Ok(Source::PlatformFeedback),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

/// How a record entered the store. Records written with a raw upsert bypass
/// the similarity screen and are marked `Direct`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdmissionPath {
    #[default]
    Direct,
    Screened,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryRecord {
    pub id: String,
    pub text: String,
    pub vector: EmbeddingVector,
    pub source: Source,
    pub timestamp: i64,
    pub admission: AdmissionPath,
}

impl MemoryRecord {
    fn validate(&self, dimension: usize) -> Result<(), MemoryError> {
        if self.id.is_empty() {
            return Err(MemoryError::InvalidRecord("empty id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        if self.vector.dimension() != dimension {
            return Err(MemoryError::DimensionMismatch {
                expected: dimension,
                got: self.vector.dimension(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub record: MemoryRecord,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissionPolicy {
    pub max_similarity_threshold: f64,
}

impl Default for AdmissionPolicy {
    fn default() -> Self {
        Self {
            max_similarity_threshold: DEFAULT_MAX_SIMILARITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdmissionDecision {
    Admitted,
    Rejected { nearest_id: String, similarity: f64 },
}

impl AdmissionDecision {
    pub fn is_admitted(&self) -> bool {
        matches!(self, AdmissionDecision::Admitted)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStats {
    pub count: usize,
    pub source_histogram: BTreeMap<Source, usize>,
    /// Mean pairwise cosine distance; 0 for fewer than two records.
    pub dispersion: f64,
}

/// Total order used for retrieval results.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

pub struct MemoryStore {
    embedder: Arc<dyn Embedder>,
    records: BTreeMap<String, MemoryRecord>,
}

impl fmt::Debug for MemoryStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MemoryStore")
            .field("dimension", &self.dimension())
            .field("count", &self.records.len())
            .finish()
    }
}

impl Default for MemoryStore {
    fn default() -> Self {
        let embedder = HashedEmbedder::new(EmbeddingConfig::default()).expect("default embedding config is valid");
        Self::new(Arc::new(embedder))
    }
}

impl MemoryStore {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            embedder,
            records: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&MemoryRecord> {
        self.records.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.records.contains_key(id)
    }

    /// Records in ascending id order.
    pub fn records(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.values()
    }

    /// Embed `text` with this store's engine and wrap it in a record.
    pub fn make_record(
        &self,
        id: impl Into<String>,
        text: impl Into<String>,
        source: Source,
        timestamp: i64,
    ) -> Result<MemoryRecord, MemoryError> {
        let text = text.into();
        let vector = self.embedder.embed(&text)?;
        Ok(MemoryRecord {
            id: id.into(),
            text,
            vector,
            source,
            timestamp,
            admission: AdmissionPath::Direct,
        })
    }

    /// Insert or replace the record with `record.id`.
    pub fn upsert(&mut self, record: MemoryRecord) -> Result<String, MemoryError> {
        record.validate(self.dimension())?;
        let id = record.id.clone();
        self.records.insert(id.clone(), record);
        Ok(id)
    }

    pub fn insert_text(
        &mut self,
        id: impl Into<String>,
        text: impl Into<String>,
        source: Source,
        timestamp: i64,
    ) -> Result<String, MemoryError> {
        let record = self.make_record(id, text, source, timestamp)?;
        self.upsert(record)
    }

    pub fn retrieve(&self, query_text: &str, top_k: usize) -> Result<Vec<RetrievalResult>, MemoryError> {
        if top_k == 0 {
            return Err(MemoryError::ZeroTopK);
        }
        let query = self.embedder.embed(query_text)?;
        self.retrieve_by_vector(&query, top_k)
    }

    pub fn retrieve_by_vector(
        &self,
        query: &EmbeddingVector,
        top_k: usize,
    ) -> Result<Vec<RetrievalResult>, MemoryError> {
        if top_k == 0 {
            return Err(MemoryError::ZeroTopK);
        }
        if query.dimension() != self.dimension() {
            return Err(MemoryError::DimensionMismatch {
                expected: self.dimension(),
                got: query.dimension(),
            });
        }
        let mut scored: Vec<(&MemoryRecord, f64)> = self
            .records
            .values()
            .map(|r| {
                let sim = cosine_similarity(query, &r.vector).expect("dimensions checked on upsert");
                (r, sim)
            })
            .collect();
        scored.sort_by(|a, b| rank_order((&a.0.id, a.1), (&b.0.id, b.1)));
        scored.truncate(top_k);
        Ok(scored
            .into_iter()
            .map(|(record, similarity)| RetrievalResult {
                record: record.clone(),
                similarity,
            })
            .collect())
    }

    /// Highest similarity between `vector` and any stored record other than
    /// one sharing `exclude_id`.
    fn nearest(&self, vector: &EmbeddingVector, exclude_id: &str) -> Option<(String, f64)> {
        self.records
            .values()
            .filter(|r| r.id != exclude_id)
            .map(|r| {
                let sim = cosine_similarity(vector, &r.vector).expect("dimensions checked on upsert");
                (r.id.clone(), sim)
            })
            .min_by(|a, b| rank_order((&a.0, a.1), (&b.0, b.1)))
    }

    /// Reject the candidate when it is more similar than the policy threshold
    /// to any stored record; otherwise upsert it, marked as screened.
    pub fn admit_with_diversity(
        &mut self,
        mut candidate: MemoryRecord,
        policy: &AdmissionPolicy,
    ) -> Result<AdmissionDecision, MemoryError> {
        candidate.validate(self.dimension())?;
        if let Some((nearest_id, similarity)) = self.nearest(&candidate.vector, &candidate.id) {
            if similarity > policy.max_similarity_threshold {
                return Ok(AdmissionDecision::Rejected { nearest_id, similarity });
            }
        }
        candidate.admission = AdmissionPath::Screened;
        self.upsert(candidate)?;
        Ok(AdmissionDecision::Admitted)
    }

    pub fn stats(&self) -> MemoryStats {
        let mut source_histogram = BTreeMap::new();
        for r in self.records.values() {
            *source_histogram.entry(r.source).or_insert(0) += 1;
        }
        let vectors: Vec<EmbeddingVector> = self.records.values().map(|r| r.vector.clone()).collect();
        MemoryStats {
            count: self.records.len(),
            source_histogram,
            dispersion: embedding_dispersion(&vectors).unwrap_or(0.0),
        }
    }

    /// Serialize to the snapshot text format.
    pub fn to_snapshot(&self) -> String {
        let mut body = format!("{SNAPSHOT_MAGIC} dim={}\n", self.dimension());
        for r in self.records.values() {
            let line = SnapshotLine::from(r);
            body.push_str(&serde_json::to_string(&line).expect("snapshot line serializes"));
            body.push('\n');
        }
        let checksum = sha256_hex(body.as_bytes());
        body.push_str(&format!("checksum={checksum}\n"));
        body
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_snapshot().as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Parse a snapshot. The embedder must have the width declared in the header.
    pub fn from_snapshot(text: &str, embedder: Arc<dyn Embedder>) -> Result<Self, MemoryError> {
        let corrupt = |m: &str| MemoryError::CorruptSnapshot(m.to_string());
        let body_end = text
            .trim_end_matches('\n')
            .rfind('\n')
            .map(|i| i + 1)
            .ok_or_else(|| corrupt("missing checksum line"))?;
        let (body, trailer) = text.split_at(body_end);
        let declared = trailer
            .trim_end_matches('\n')
            .strip_prefix("checksum=")
            .ok_or_else(|| corrupt("missing checksum line"))?;
        if sha256_hex(body.as_bytes()) != declared {
            return Err(corrupt("checksum mismatch"));
        }
        let mut lines = body.lines();
        let header = lines.next().ok_or_else(|| corrupt("missing header"))?;
        let dim: usize = header
            .strip_prefix(SNAPSHOT_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("dim="))
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| corrupt("bad header"))?;
        if dim != embedder.dimension() {
            return Err(MemoryError::DimensionMismatch {
                expected: embedder.dimension(),
                got: dim,
            });
        }
        let mut store = Self::new(embedder);
        for (i, line) in lines.enumerate() {
            let parsed: SnapshotLine =
                serde_json::from_str(line).map_err(|e| MemoryError::CorruptSnapshot(format!("record {i}: {e}")))?;
            let record = parsed
                .into_record()
                .map_err(|e| MemoryError::CorruptSnapshot(format!("record {i}: {e}")))?;
            if store.contains(&record.id) {
                return Err(MemoryError::CorruptSnapshot(format!("duplicate id {}", record.id)));
            }
            store.upsert(record)?;
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>, embedder: Arc<dyn Embedder>) -> Result<Self, MemoryError> {
        let text = fs::read_to_string(path)?;
        Self::from_snapshot(&text, embedder)
    }

    /// Load with the default hashed engine at the width named in the header.
    pub fn load_default(path: impl AsRef<Path>) -> Result<Self, MemoryError> {
        let text = fs::read_to_string(path)?;
        let dim = text
            .lines()
            .next()
            .and_then(|h| h.strip_prefix(SNAPSHOT_MAGIC))
            .and_then(|rest| rest.trim().strip_prefix("dim="))
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| MemoryError::CorruptSnapshot("bad header".into()))?;
        let config = EmbeddingConfig {
            dimension: dim,
            ..EmbeddingConfig::default()
        };
        Self::from_snapshot(&text, Arc::new(HashedEmbedder::new(config)?))
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotLine {
    id: String,
    source: Source,
    admission: AdmissionPath,
    timestamp: i64,
    text: String,
    /// Little-endian IEEE-754 bytes of every component, hex-encoded.
    vector: String,
}

impl From<&MemoryRecord> for SnapshotLine {
    fn from(r: &MemoryRecord) -> Self {
        let bytes: Vec<u8> = r.vector.values().iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            id: r.id.clone(),
            source: r.source,
            admission: r.admission,
            timestamp: r.timestamp,
            text: r.text.clone(),
            vector: hex::encode(bytes),
        }
    }
}

impl SnapshotLine {
    fn into_record(self) -> Result<MemoryRecord, String> {
        let bytes = hex::decode(&self.vector).map_err(|e| e.to_string())?;
        if bytes.len() % 8 != 0 {
            return Err("vector byte length not a multiple of 8".into());
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(MemoryRecord {
            id: self.id,
            text: self.text,
            vector: EmbeddingVector::new(values),
            source: self.source,
            timestamp: self.timestamp,
            admission: self.admission,
        })
    }
}

/// A store behind a reader-writer lock: many concurrent readers or one writer.
#[derive(Debug, Clone)]
pub struct SharedMemory(Arc<RwLock<MemoryStore>>);

impl SharedMemory {
    pub fn new(store: MemoryStore) -> Self {
        Self(Arc::new(RwLock::new(store)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, MemoryStore> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, MemoryStore> {
        self.0.write().unwrap_or_else(|e| e.into_inner())
    }
}
