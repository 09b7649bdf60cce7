//! Simulated social connectors and the append-only message log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::diversity::{distinct_n, tokenize};
use crate::hashing::{derive_seed, sha256_hex};
use crate::journal::{self, JournalError, JournalLine, JournalWriter};

pub const TWITTER: &str = "twitter";
pub const WARPCAST: &str = "warpcast";
pub const TELEGRAM: &str = "telegram";

pub const TWITTER_MAX_LEN: usize = 280;
pub const DEFAULT_MAX_LEN: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConnectorError {
    #[error("content is empty")]
    EmptyContent,
    #[error("content is {len} characters, {platform} accepts at most {limit}")]
    TooLong { platform: String, len: usize, limit: usize },
    #[error("{0} is down")]
    ConnectorDown(String),
    #[error("unknown post {post_id} on {platform}")]
    UnknownPost { platform: String, post_id: u64 },
    #[error("bad connector config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostReceipt {
    pub post_id: u64,
    pub platform: String,
    pub timestamp: i64,
    pub content_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EngagementMetrics {
    pub post_id: u64,
    pub likes: u64,
    pub shares: u64,
    pub comments: u64,
}

impl EngagementMetrics {
    pub fn total(&self) -> u64 {
        self.likes + self.shares + self.comments
    }
}

pub trait Connector: Send + Sync {
    fn platform(&self) -> &str;
    fn max_len(&self) -> usize;
    fn post(&self, content: &str) -> Result<PostReceipt, ConnectorError>;
    fn fetch_engagement(&self, post_id: u64) -> Result<EngagementMetrics, ConnectorError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectorConfig {
    pub platform: String,
    pub max_len: usize,
    pub seed: u64,
    /// 1-based indices of `post` calls that fail with `ConnectorDown`.
    pub fail_on: BTreeSet<u64>,
}

impl ConnectorConfig {
    pub fn new(platform: &str, seed: u64) -> Self {
        let max_len = if platform == TWITTER {
            TWITTER_MAX_LEN
        } else {
            DEFAULT_MAX_LEN
        };
        Self {
            platform: platform.to_string(),
            max_len,
            seed,
            fail_on: BTreeSet::new(),
        }
    }
}

/// Parse a connector config file.
///
/// ```text
/// seed=42
/// twitter.max_len=280
/// twitter.fail_on=3,7
/// warpcast.max_len=1024
/// ```
///
/// Every platform named in a key gets a connector. Without any platform keys
/// the three default platforms are configured.
pub fn parse_connector_config(text: &str) -> Result<Vec<ConnectorConfig>, ConnectorError> {
    let bad = |m: String| ConnectorError::BadConfig(m);
    let mut seed = 0u64;
    let mut per_platform: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for raw in text.lines() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value: {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "seed" {
            seed = value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?;
            continue;
        }
        let (platform, field) = key
            .split_once('.')
            .ok_or_else(|| bad(format!("expected platform.field: {key:?}")))?;
        per_platform
            .entry(platform.to_string())
            .or_default()
            .push((field.to_string(), value.to_string()));
    }
    if per_platform.is_empty() {
        return Ok([TWITTER, WARPCAST, TELEGRAM]
            .iter()
            .map(|p| ConnectorConfig::new(p, seed))
            .collect());
    }
    per_platform
        .into_iter()
        .map(|(platform, fields)| {
            let mut cfg = ConnectorConfig::new(
                &platform,
                derive_seed(seed, crate::hashing::fnv1a64(0, platform.as_bytes())),
            );
            for (field, value) in fields {
                match field.as_str() {
                    "max_len" => {
                        cfg.max_len = value
                            .parse()
                            .ok()
                            .filter(|n| *n > 0)
                            .ok_or_else(|| bad(format!("bad max_len {value:?}")))?;
                    }
                    "fail_on" => {
                        for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                            cfg.fail_on
                                .insert(part.parse().map_err(|_| bad(format!("bad fail_on entry {part:?}")))?);
                        }
                    }
                    "seed" => {
                        cfg.seed = value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?;
                    }
                    other => return Err(bad(format!("unknown field {platform}.{other}"))),
                }
            }
            Ok(cfg)
        })
        .collect()
}

#[derive(Debug)]
struct StoredPost {
    content: String,
}

#[derive(Debug, Default)]
struct ConnectorState {
    next_post_id: u64,
    attempts: u64,
    down: bool,
    posts: BTreeMap<u64, StoredPost>,
}

/// In-process stand-in for a social platform. Post ids start at 1 and are
/// assigned under a lock, so they stay gap-free under concurrent posting;
/// rejected posts never consume an id.
pub struct SimulatedConnector {
    config: ConnectorConfig,
    clock: Arc<dyn Clock>,
    state: Mutex<ConnectorState>,
}

impl fmt::Debug for SimulatedConnector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimulatedConnector")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl SimulatedConnector {
    pub fn new(config: ConnectorConfig, clock: Arc<dyn Clock>) -> Self {
        Self {
            config,
            clock,
            state: Mutex::new(ConnectorState {
                next_post_id: 1,
                ..ConnectorState::default()
            }),
        }
    }

    /// Force every following post to fail (or recover).
    pub fn set_outage(&self, down: bool) {
        self.lock().down = down;
    }

    pub fn post_count(&self) -> usize {
        self.lock().posts.len()
    }

    pub fn config(&self) -> &ConnectorConfig {
        &self.config
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ConnectorState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// Engagement is a deterministic function of the connector seed, the post id,
/// the content length and the content's distinct-1 ratio. For a fixed seed and
/// post id every count is non-decreasing in distinct-1.
pub fn simulate_engagement(seed: u64, post_id: u64, content: &str) -> EngagementMetrics {
    let tokens = tokenize(content);
    let diversity = distinct_n(&[tokens], 1).unwrap_or(0.0);
    let length_factor = (1.0 + content.chars().count() as f64).ln();
    let rate = 12.0 * length_factor * diversity;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, post_id));
    let mut draw = |scale: f64| (scale * rate * (0.5 + rng.random::<f64>())).floor() as u64;
    EngagementMetrics {
        post_id,
        likes: draw(1.0),
        shares: draw(0.25),
        comments: draw(0.125),
    }
}

impl Connector for SimulatedConnector {
    fn platform(&self) -> &str {
        &self.config.platform
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn post(&self, content: &str) -> Result<PostReceipt, ConnectorError> {
        let mut state = self.lock();
        state.attempts += 1;
        if state.down || self.config.fail_on.contains(&state.attempts) {
            return Err(ConnectorError::ConnectorDown(self.config.platform.clone()));
        }
        if content.trim().is_empty() {
            return Err(ConnectorError::EmptyContent);
        }
        let len = content.chars().count();
        if len > self.config.max_len {
            return Err(ConnectorError::TooLong {
                platform: self.config.platform.clone(),
                len,
                limit: self.config.max_len,
            });
        }
        let post_id = state.next_post_id;
        state.next_post_id += 1;
        state.posts.insert(
            post_id,
            StoredPost {
                content: content.to_string(),
            },
        );
        Ok(PostReceipt {
            post_id,
            platform: self.config.platform.clone(),
            timestamp: self.clock.now_ms(),
            content_hash: sha256_hex(content.as_bytes()),
        })
    }

    fn fetch_engagement(&self, post_id: u64) -> Result<EngagementMetrics, ConnectorError> {
        let state = self.lock();
        let post = state.posts.get(&post_id).ok_or_else(|| ConnectorError::UnknownPost {
            platform: self.config.platform.clone(),
            post_id,
        })?;
        Ok(simulate_engagement(self.config.seed, post_id, &post.content))
    }
}

pub type ConnectorMap = BTreeMap<String, Arc<dyn Connector>>;

pub fn build_connectors(configs: Vec<ConnectorConfig>, clock: Arc<dyn Clock>) -> ConnectorMap {
    configs
        .into_iter()
        .map(|c| {
            let name = c.platform.clone();
            let conn: Arc<dyn Connector> = Arc::new(SimulatedConnector::new(c, clock.clone()));
            (name, conn)
        })
        .collect()
}

/// The default trio of platforms, all seeded from `seed`.
pub fn default_connectors(seed: u64, clock: Arc<dyn Clock>) -> ConnectorMap {
    let configs = [TWITTER, WARPCAST, TELEGRAM]
        .iter()
        .map(|p| ConnectorConfig::new(p, derive_seed(seed, crate::hashing::fnv1a64(0, p.as_bytes()))))
        .collect();
    build_connectors(configs, clock)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogKind {
    Observation,
    Plan,
    Gate,
    Dispatch,
    Receipt,
    Error,
    Feedback,
}

impl LogKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LogKind::Observation => "observation",
            LogKind::Plan => "plan",
            LogKind::Gate => "gate",
            LogKind::Dispatch => "dispatch",
            LogKind::Receipt => "receipt",
            LogKind::Error => "error",
            LogKind::Feedback => "feedback",
        }
    }
}

impl fmt::Display for LogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "observation" => LogKind::Observation,
            "plan" => LogKind::Plan,
            "gate" => LogKind::Gate,
            "dispatch" => LogKind::Dispatch,
            "receipt" => LogKind::Receipt,
            "error" => LogKind::Error,
            "feedback" => LogKind::Feedback,
            other => return Err(format!("unknown log kind {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub offset: u64,
    pub kind: LogKind,
    pub timestamp: i64,
    pub payload: String,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log I/O failed: {0}")]
    Io(std::io::Error),
    #[error("corrupt log: {0}")]
    CorruptLog(String),
}

impl From<JournalError> for LogError {
    fn from(e: JournalError) -> Self {
        match e {
            JournalError::Io(io) => LogError::Io(io),
            other => LogError::CorruptLog(other.to_string()),
        }
    }
}

impl TryFrom<JournalLine> for LogEntry {
    type Error = LogError;

    fn try_from(line: JournalLine) -> Result<Self, LogError> {
        Ok(LogEntry {
            offset: line.offset,
            kind: line.kind.parse().map_err(LogError::CorruptLog)?,
            timestamp: line.timestamp,
            payload: line.payload,
        })
    }
}

/// Append-only message history, optionally mirrored to a file.
#[derive(Debug)]
pub struct MessageLog {
    writer: JournalWriter,
    entries: Vec<LogEntry>,
}

impl MessageLog {
    pub fn in_memory() -> Self {
        Self {
            writer: JournalWriter::in_memory(),
            entries: Vec::new(),
        }
    }

    pub fn create(path: impl AsRef<Path>) -> Result<Self, LogError> {
        Ok(Self {
            writer: JournalWriter::create(path)?,
            entries: Vec::new(),
        })
    }

    pub fn append(&mut self, kind: LogKind, timestamp: i64, payload: &str) -> Result<u64, LogError> {
        let line = self.writer.append(kind.as_str(), timestamp, payload)?;
        let offset = line.offset;
        self.entries.push(LogEntry {
            offset,
            kind,
            timestamp,
            payload: line.payload,
        });
        Ok(offset)
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.writer.path()
    }
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LogError> {
    journal::parse(text)?.into_iter().map(LogEntry::try_from).collect()
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogEntry>, LogError> {
    let text = std::fs::read_to_string(path).map_err(LogError::Io)?;
    parse_log(&text)
}

/// Rebuild the agent state recorded in a log file and return its hash.
pub fn replay_log(path: impl AsRef<Path>) -> Result<String, LogError> {
    let entries = read_log(path)?;
    let state = crate::agent::replay_entries(&entries)?;
    Ok(state.state_hash())
}
