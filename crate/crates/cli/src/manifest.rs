//! Run manifests: enough to re-execute a run and get the same artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use zerebro_core::config::ConfigMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Every setting the run used, defaults included.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// Relative paths are inside the run's output directory.
    pub artifacts: Vec<String>,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest-{}.json", command.replace(' ', "-"))
    }

    pub fn config_map(&self) -> ConfigMap {
        self.config.clone().into_iter().collect()
    }

    pub fn write(&self, out: &Path) -> anyhow::Result<PathBuf> {
        let path = out.join(Self::file_name(&self.command));
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
