use zerebro_core::backrooms::{run_backrooms, BackroomsConfig};
use zerebro_core::generator::MarkovGenerator;
use zerebro_core::memory::MemoryStore;

use crate::run::Run;

pub const TRANSCRIPT_FILE: &str = "backrooms-transcript.txt";

pub fn run(run: &mut Run) -> anyhow::Result<()> {
    let d = BackroomsConfig::default();
    let c = &mut run.config;
    c.set_default("backrooms.turns", d.turns);
    c.set_default("backrooms.injection_rate", d.injection_rate);
    c.set_default("backrooms.window", d.window);
    c.set_default("backrooms.store_injected", d.store_injected);
    c.set_default("backrooms.top_k", d.top_k);
    c.set_default("backrooms.opening_prompt", &d.opening_prompt);
    let config = BackroomsConfig {
        turns: c.parsed_or("backrooms.turns", d.turns)?,
        seed: run.seed,
        injection_rate: c.parsed_or("backrooms.injection_rate", d.injection_rate)?,
        opening_prompt: c.get("backrooms.opening_prompt").unwrap_or_default().to_string(),
        window: c.parsed_or("backrooms.window", d.window)?,
        store_injected: c.parsed_or("backrooms.store_injected", d.store_injected)?,
        top_k: c.parsed_or("backrooms.top_k", d.top_k)?,
    };
    config.validate().map_err(|e| run.usage(e))?;

    let mut memory = MemoryStore::new(super::embedder(run)?);
    let transcript = run_backrooms(&config, &mut memory, &MarkovGenerator::bundled())?;
    run.write(TRANSCRIPT_FILE, transcript.to_text())?;
    let snapshot = run.path_or_default("backrooms.memory_path", "backrooms-memory.snapshot");
    memory.persist(&snapshot)?;
    run.record(snapshot);
    println!("{}", transcript.summary());
    Ok(())
}
