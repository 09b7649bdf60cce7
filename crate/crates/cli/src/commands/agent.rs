use std::fmt::Write as _;
use std::fs;
use std::sync::Arc;

use anyhow::{bail, Context};
use zerebro_core::agent::{Agent, Observation};
use zerebro_core::chain::{Amount, Ledger};
use zerebro_core::clock::{Clock, SimClock};
use zerebro_core::config::agent_config;
use zerebro_core::generator::{corpus_lines, MarkovGenerator, HUMAN_CORPUS};
use zerebro_core::hashing::derive_seed;
use zerebro_core::memory::MemoryStore;
use zerebro_core::platforms::{build_connectors, default_connectors, parse_connector_config, replay_log, MessageLog};

use crate::run::Run;

pub const SUMMARY_FILE: &str = "agent-summary.txt";

pub fn run(run: &mut Run) -> anyhow::Result<()> {
    // The section seed doubles as agent.seed.
    let agent_cfg = agent_config(&run.config)?;
    let c = &mut run.config;
    c.set_default("agent.sentiment_threshold", agent_cfg.sentiment_threshold);
    c.set_default("agent.max_actions_per_turn", agent_cfg.max_actions_per_turn);
    c.set_default("agent.eta", agent_cfg.eta);
    c.set_default("agent.top_k", agent_cfg.top_k);
    c.set_default("agent.platforms", agent_cfg.platforms.join(","));
    c.set_default("agent.auto_feedback", agent_cfg.auto_feedback);
    c.set_default("agent.turns", 10);
    c.set_default("agent.chain", false);
    c.set_default("agent.endowment", 100);
    let turns: usize = c.parsed_or("agent.turns", 10)?;
    let with_chain: bool = c.parsed_or("agent.chain", false)?;
    let endowment: Amount = c.parsed_or("agent.endowment", Amount::from_coins(100))?;
    if agent_cfg.max_actions_per_turn == 0 {
        return Err(run.usage("agent.max_actions_per_turn must be positive"));
    }

    let observations: Vec<String> = match run.config.get("agent.observations") {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading observations {path}"))?;
            let lines: Vec<String> = corpus_lines(&text).into_iter().map(str::to_string).collect();
            if lines.is_empty() {
                return Err(run.usage(format!("{path} has no observations")));
            }
            lines
        }
        None => {
            let human = corpus_lines(HUMAN_CORPUS);
            (0..turns as u64)
                .map(|t| human[(derive_seed(run.seed, t) % human.len() as u64) as usize].to_string())
                .collect()
        }
    };

    let clock: Arc<dyn Clock> = Arc::new(SimClock::default());
    let connectors = match run.config.get("platforms.config") {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading connector config {path}"))?;
            build_connectors(parse_connector_config(&text).map_err(|e| run.usage(e))?, clock.clone())
        }
        None => default_connectors(run.seed, clock.clone()),
    };
    let log_path = run.path_or_default("agent.log_path", "agent.log");
    let memory = MemoryStore::new(super::embedder(run)?);
    let mut agent = Agent::new(agent_cfg, memory, MessageLog::create(&log_path)?, clock.clone())?
        .with_generator(Arc::new(MarkovGenerator::bundled()))
        .with_connectors(connectors);
    if with_chain {
        let mut ledger = Ledger::new(Default::default(), clock.clone());
        let wallet = ledger.create_wallet(run.seed, endowment)?;
        agent = agent.with_chain(ledger, wallet.address);
    }

    let mut summary = String::new();
    for t in 0..turns {
        let obs = &observations[t % observations.len()];
        let outcome = agent.step(&Observation::human(obs.as_str()))?;
        let kinds: Vec<&str> = outcome.requests.iter().map(|r| r.kind.as_str()).collect();
        let passed = outcome.decisions.iter().filter(|d| d.passed()).count();
        let _ = writeln!(
            summary,
            "turn={} planned={} passed={} receipts={} errors={}",
            outcome.turn,
            kinds.join(","),
            passed,
            outcome.receipts.len(),
            outcome.errors.len()
        );
    }
    let weights: Vec<String> = agent
        .state()
        .normalized_weights()
        .iter()
        .map(|(k, w)| format!("{k}:{w:.6}"))
        .collect();
    let (state, memory, log, ledger) = agent.into_parts();
    let live = state.state_hash();
    let replayed = replay_log(&log_path)?;
    let _ = writeln!(summary, "weights={}", weights.join(","));
    let _ = writeln!(summary, "memory_records={}", memory.len());
    let _ = writeln!(summary, "log_entries={}", log.len());
    let _ = writeln!(summary, "state_hash={live}");
    let _ = writeln!(summary, "replay_hash={replayed}");
    run.record(log_path);

    let memory_path = run.path_or_default("agent.memory_path", "agent-memory.snapshot");
    memory.persist(&memory_path)?;
    run.record(memory_path);
    if let Some(ledger) = ledger {
        let ledger_path = run.path_or_default("agent.ledger_path", "agent-ledger.journal");
        ledger.persist(&ledger_path)?;
        run.record(ledger_path);
        let _ = writeln!(summary, "ledger_entries={}", ledger.entries().len());
    }
    run.write(SUMMARY_FILE, &summary)?;
    print!("{summary}");
    if live != replayed {
        bail!("replayed state hash {replayed} differs from live {live}");
    }
    Ok(())
}
