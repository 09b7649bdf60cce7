//! Command handlers. Each reads only the resolved settings, so a manifest's
//! config is all a rerun needs.

mod agent;
mod backrooms;
mod chain;
mod collapse;
mod memory;
mod report;

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use zerebro_core::config::{embedding_config, ConfigMap};
use zerebro_core::embedding::{build_embedder, Embedder};

use crate::manifest::RunManifest;
use crate::run::{section, Run, UsageError};

pub const COMMANDS: &[&str] = &[
    "collapse",
    "backrooms",
    "agent",
    "memory upsert",
    "memory query",
    "memory stats",
    "chain mint",
    "chain deploy",
    "chain verify",
    "report",
];

/// Run `command` with fully merged settings and write its manifest.
pub fn execute(command: &str, mut config: ConfigMap, out: &Path) -> anyhow::Result<RunManifest> {
    if !COMMANDS.contains(&command) {
        return Err(UsageError::new(command, "unknown command").into());
    }
    let started = Instant::now();
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let seed_key = format!("{}.seed", section(command));
    let seed = match config.parsed::<u64>(&seed_key)? {
        Some(s) => s,
        None => config.parsed_or("seed", 0u64)?,
    };
    config.set(seed_key, seed);

    let mut run = Run::new(command, out, config, seed);
    match command {
        "collapse" => collapse::run(&mut run)?,
        "backrooms" => backrooms::run(&mut run)?,
        "agent" => agent::run(&mut run)?,
        "memory upsert" => memory::upsert(&mut run)?,
        "memory query" => memory::query(&mut run)?,
        "memory stats" => memory::stats(&mut run)?,
        "chain mint" => chain::mint(&mut run)?,
        "chain deploy" => chain::deploy(&mut run)?,
        "chain verify" => chain::verify(&mut run)?,
        "report" => report::run(&mut run)?,
        _ => unreachable!("checked against COMMANDS"),
    }

    let manifest = RunManifest {
        command: command.to_string(),
        config: run.config.as_map().clone(),
        seed,
        artifacts: run.artifacts(),
        duration_secs: started.elapsed().as_secs_f64(),
    };
    manifest.write(out)?;
    Ok(manifest)
}

/// Embedding engine from the `embedding.*` keys, recording the defaults.
fn embedder(run: &mut Run) -> anyhow::Result<Arc<dyn Embedder>> {
    let (backend, cfg) = embedding_config(&run.config)?;
    run.config.set_default("embedding.backend", backend);
    run.config.set_default("embedding.dimension", cfg.dimension);
    run.config.set_default("embedding.ngram_min", cfg.ngram_min);
    run.config.set_default("embedding.ngram_max", cfg.ngram_max);
    run.config.set_default("embedding.seed", cfg.seed);
    build_embedder(backend, cfg).map_err(|e| run.usage(e))
}
