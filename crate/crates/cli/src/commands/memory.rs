use std::fmt::Write as _;
use std::path::PathBuf;

use zerebro_core::memory::{MemoryStore, Source, DEFAULT_TOP_K};

use crate::run::Run;

fn store_path(run: &Run) -> PathBuf {
    run.path_or_default("memory.path", "memory.snapshot")
}

/// The snapshot at `memory.path`, or an empty store when there is none yet.
fn open(run: &mut Run) -> anyhow::Result<(MemoryStore, PathBuf)> {
    let embedder = super::embedder(run)?;
    let path = store_path(run);
    let store = if path.exists() {
        MemoryStore::load(&path, embedder)?
    } else {
        MemoryStore::new(embedder)
    };
    Ok((store, path))
}

pub fn upsert(run: &mut Run) -> anyhow::Result<()> {
    let text = run.require("memory.text", "--text")?;
    let (mut store, path) = open(run)?;
    let source: Source = run.config.parsed_or("memory.source", Source::Human)?;
    run.config.set_default("memory.source", source);
    let id = match run.config.get("memory.id") {
        Some(id) => id.to_string(),
        None => format!("mem-{:06}", store.len()),
    };
    let timestamp = run.config.parsed_or("memory.timestamp", store.len() as i64)?;
    let record = store
        .make_record(&id, text, source, timestamp)
        .map_err(|e| run.usage(e))?;
    store.upsert(record)?;
    store.persist(&path)?;
    run.record(path);
    println!("{id}");
    Ok(())
}

pub fn query(run: &mut Run) -> anyhow::Result<()> {
    let text = run.require("memory.text", "--text")?;
    run.config.set_default("memory.k", DEFAULT_TOP_K);
    let k: usize = run.config.parsed_or("memory.k", DEFAULT_TOP_K)?;
    if k == 0 {
        return Err(run.usage("--k must be positive"));
    }
    let (store, _) = open(run)?;
    let results = store.retrieve(&text, k).map_err(|e| run.usage(e))?;
    let mut out = String::new();
    for (rank, r) in results.iter().enumerate() {
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{}\t{}\t{}",
            rank + 1,
            r.similarity,
            r.record.id,
            r.record.source,
            r.record.text
        );
    }
    run.write("memory-query.tsv", &out)?;
    print!("{out}");
    Ok(())
}

pub fn stats(run: &mut Run) -> anyhow::Result<()> {
    let (store, _) = open(run)?;
    let s = store.stats();
    let mut out = format!(
        "count={}\ndimension={}\ndispersion={}\n",
        s.count,
        store.dimension(),
        s.dispersion
    );
    for (source, n) in &s.source_histogram {
        let _ = writeln!(out, "source.{source}={n}");
    }
    run.write("memory-stats.txt", &out)?;
    print!("{out}");
    Ok(())
}
