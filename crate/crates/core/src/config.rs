//! Plain `key=value` configuration files.
//!
//! One setting per line, `#` starts a comment line, blank lines are ignored.
//! Keys are dotted (`agent.eta`); values run to the end of the line and are
//! trimmed.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::agent::AgentConfig;
use crate::embedding::{EmbeddingBackend, EmbeddingConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: key {key:?} set twice")]
    Duplicate { line: usize, key: String },
    #[error("bad value for {key}: {value:?} ({reason})")]
    Value { key: String, value: String, reason: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: format!("expected key=value, got {line:?}"),
            })?;
            let key = k.trim();
            if key.is_empty() || key.chars().any(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: format!("bad key {key:?}"),
                });
            }
            if map.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.insert(key.into(), value.to_string());
    }

    /// Set `key` only if it is absent.
    pub fn set_default(&mut self, key: &str, value: impl ToString) {
        self.0.entry(key.to_string()).or_insert_with(|| value.to_string());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn as_map(&self) -> &BTreeMap<String, String> {
        &self.0
    }

    /// Typed lookup; absent keys are `Ok(None)`.
    pub fn parsed<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>().map_err(|e| ConfigError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .transpose()
    }

    pub fn parsed_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>().map_err(|e| ConfigError::Value {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

impl fmt::Display for ConfigMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

impl FromIterator<(String, String)> for ConfigMap {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// `agent.*` keys over the defaults.
pub fn agent_config(map: &ConfigMap) -> Result<AgentConfig, ConfigError> {
    let d = AgentConfig::default();
    Ok(AgentConfig {
        seed: map.parsed_or("agent.seed", d.seed)?,
        sentiment_threshold: map.parsed_or("agent.sentiment_threshold", d.sentiment_threshold)?,
        max_actions_per_turn: map.parsed_or("agent.max_actions_per_turn", d.max_actions_per_turn)?,
        eta: map.parsed_or("agent.eta", d.eta)?,
        top_k: map.parsed_or("agent.top_k", d.top_k)?,
        platforms: map.list("agent.platforms")?.unwrap_or(d.platforms),
        auto_feedback: map.parsed_or("agent.auto_feedback", d.auto_feedback)?,
    })
}

/// `embedding.*` keys over the defaults.
pub fn embedding_config(map: &ConfigMap) -> Result<(EmbeddingBackend, EmbeddingConfig), ConfigError> {
    let d = EmbeddingConfig::default();
    let backend = map.parsed_or("embedding.backend", EmbeddingBackend::default())?;
    let config = EmbeddingConfig {
        dimension: map.parsed_or("embedding.dimension", d.dimension)?,
        ngram_min: map.parsed_or("embedding.ngram_min", d.ngram_min)?,
        ngram_max: map.parsed_or("embedding.ngram_max", d.ngram_max)?,
        seed: map.parsed_or("embedding.seed", d.seed)?,
    };
    Ok((backend, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let m = ConfigMap::parse("# agent\nagent.eta = 0.2\n\n agent.seed=7\n").unwrap();
        assert_eq!(m.get("agent.eta"), Some("0.2"));
        assert_eq!(m.parsed::<u64>("agent.seed").unwrap(), Some(7));
        assert_eq!(m.parsed::<u64>("agent.turns").unwrap(), None);
    }

    #[test]
    fn rejects_duplicates_and_junk() {
        assert!(matches!(
            ConfigMap::parse("a=1\na=2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            ConfigMap::parse("novalue"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(ConfigMap::parse("a b=1"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn display_round_trips() {
        let m = ConfigMap::parse("b=2\na=x y\n").unwrap();
        assert_eq!(ConfigMap::parse(&m.to_string()).unwrap(), m);
    }

    #[test]
    fn agent_keys_override_defaults() {
        let m = ConfigMap::parse(
            "agent.seed=9\nagent.sentiment_threshold=-0.5\nagent.max_actions_per_turn=2\nagent.eta=0.05\nagent.platforms=twitter,telegram",
        )
        .unwrap();
        let c = agent_config(&m).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.sentiment_threshold, -0.5);
        assert_eq!(c.max_actions_per_turn, 2);
        assert_eq!(c.eta, 0.05);
        assert_eq!(c.platforms, vec!["twitter", "telegram"]);
        assert_eq!(agent_config(&ConfigMap::new()).unwrap(), AgentConfig::default());
    }

    #[test]
    fn bad_value_names_the_key() {
        let m = ConfigMap::parse("agent.eta=fast").unwrap();
        let err = agent_config(&m).unwrap_err();
        assert!(err.to_string().contains("agent.eta"), "{err}");
    }

    #[test]
    fn lists() {
        let m = ConfigMap::parse("r=0, 0.25,0.5\ne=").unwrap();
        assert_eq!(m.list::<f64>("r").unwrap(), Some(vec![0.0, 0.25, 0.5]));
        assert_eq!(m.list::<f64>("e").unwrap(), Some(vec![]));
    }
}
