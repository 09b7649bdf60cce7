//! Per-run bookkeeping shared by the command handlers.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use zerebro_core::config::ConfigMap;

/// Bad or missing user input; exits with status 2 and the command usage.
#[derive(Debug)]
pub struct UsageError {
    pub command: String,
    pub message: String,
}

impl UsageError {
    pub fn new(command: &str, message: impl fmt::Display) -> Self {
        Self {
            command: command.to_string(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.command, self.message)
    }
}

impl std::error::Error for UsageError {}

/// Config section owning a command's keys: `chain mint` reads `chain.*`.
pub fn section(command: &str) -> &str {
    command.split_whitespace().next().unwrap_or(command)
}

pub struct Run<'a> {
    pub command: &'a str,
    pub out: &'a Path,
    pub config: ConfigMap,
    pub seed: u64,
    artifacts: Vec<PathBuf>,
}

impl<'a> Run<'a> {
    pub fn new(command: &'a str, out: &'a Path, config: ConfigMap, seed: u64) -> Self {
        Self {
            command,
            out,
            config,
            seed,
            artifacts: Vec::new(),
        }
    }

    pub fn usage(&self, message: impl fmt::Display) -> anyhow::Error {
        UsageError::new(self.command, message).into()
    }

    /// Required string setting; absence is a usage error naming the flag.
    pub fn require(&self, key: &str, flag: &str) -> anyhow::Result<String> {
        self.config
            .get(key)
            .filter(|v| !v.is_empty())
            .map(str::to_string)
            .ok_or_else(|| self.usage(format!("missing {flag} (or {key} in --config)")))
    }

    /// Path setting from config, or `default_name` inside `--out`.
    pub fn path_or_default(&self, key: &str, default_name: &str) -> PathBuf {
        self.config
            .get(key)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out.join(default_name))
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.record(path.clone());
        Ok(path)
    }

    pub fn record(&mut self, path: PathBuf) {
        if !self.artifacts.contains(&path) {
            self.artifacts.push(path);
        }
    }

    /// Artifact paths, relative to `--out` where possible.
    pub fn artifacts(&self) -> Vec<String> {
        self.artifacts
            .iter()
            .map(|p| p.strip_prefix(self.out).unwrap_or(p).display().to_string())
            .collect()
    }
}
