//! Recursive self-dialogue: the agent answers its own previous output for N
//! turns, storing every utterance in memory, optionally interleaved with
//! observations drawn from a human corpus.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{plan, ActionKind, AgentError, AgentState, PlanConfig};
use crate::diversity::{DiversityReport, LengthReference};
use crate::generator::{corpus_lines, Generator, HUMAN_CORPUS};
use crate::hashing::derive_seed;
use crate::memory::{MemoryError, MemoryStore, Source, DEFAULT_TOP_K};

pub const DEFAULT_WINDOW: usize = 25;
/// Tail threshold, in reference standard deviations of utterance length.
pub const LENGTH_TAIL_K: f64 = 2.0;

#[derive(Debug, Error)]
pub enum BackroomsError {
    #[error("bad backrooms config: {0}")]
    BadConfig(String),
    #[error("turn {turn}: {source}")]
    Turn {
        turn: usize,
        #[source]
        source: AgentError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackroomsConfig {
    pub turns: usize,
    pub seed: u64,
    /// Probability that a turn's observation is a human-corpus line rather
    /// than the agent's own previous output.
    pub injection_rate: f64,
    pub opening_prompt: String,
    pub window: usize,
    /// Also store injected human lines in memory.
    pub store_injected: bool,
    pub top_k: usize,
}

impl Default for BackroomsConfig {
    fn default() -> Self {
        Self {
            turns: 200,
            seed: 0,
            injection_rate: 0.0,
            opening_prompt: "where does the hallway end".into(),
            window: DEFAULT_WINDOW,
            store_injected: false,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl BackroomsConfig {
    pub fn validate(&self) -> Result<(), BackroomsError> {
        let bad = |m: String| Err(BackroomsError::BadConfig(m));
        if self.turns == 0 {
            return bad("turns must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.injection_rate) {
            return bad(format!("injection_rate {} outside [0, 1]", self.injection_rate));
        }
        if self.window == 0 {
            return bad("window must be positive".into());
        }
        if self.opening_prompt.trim().is_empty() {
            return bad("opening prompt is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub index: usize,
    pub observation: String,
    pub injected: bool,
    pub generated: String,
    pub memory_ids: Vec<String>,
    /// Over the last `window` generated texts, this one included.
    pub report: DiversityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTranscript {
    pub config: BackroomsConfig,
    pub turns: Vec<DialogueTurn>,
}

/// Aggregates over the final `window` turns of a transcript.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackroomsSummary {
    pub turns: usize,
    pub injected_turns: usize,
    pub mean_distinct_2: f64,
    pub mean_dispersion: f64,
    pub final_report: DiversityReport,
}

impl fmt::Display for BackroomsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "summary turns={} injected_turns={} mean_distinct_2={} mean_dispersion={} {}",
            self.turns, self.injected_turns, self.mean_distinct_2, self.mean_dispersion, self.final_report
        )
    }
}

impl BackroomsSummary {
    /// Parse the line written by `Display`.
    pub fn parse(line: &str) -> Option<Self> {
        let rest = line.trim().strip_prefix("summary ")?;
        let mut turns = None;
        let mut injected_turns = None;
        let mut mean_distinct_2 = None;
        let mut mean_dispersion = None;
        let mut report_fields = Vec::new();
        for pair in rest.split_whitespace() {
            let (k, v) = pair.split_once('=')?;
            match k {
                "turns" => turns = v.parse().ok(),
                "injected_turns" => injected_turns = v.parse().ok(),
                "mean_distinct_2" => mean_distinct_2 = v.parse().ok(),
                "mean_dispersion" => mean_dispersion = v.parse().ok(),
                _ => report_fields.push(pair),
            }
        }
        Some(Self {
            turns: turns?,
            injected_turns: injected_turns?,
            mean_distinct_2: mean_distinct_2?,
            mean_dispersion: mean_dispersion?,
            final_report: DiversityReport::parse_kv(&report_fields.join(" "))?,
        })
    }
}

impl DialogueTranscript {
    pub fn summary(&self) -> BackroomsSummary {
        let tail = &self.turns[self.turns.len().saturating_sub(self.config.window)..];
        let n = tail.len().max(1) as f64;
        BackroomsSummary {
            turns: self.turns.len(),
            injected_turns: self.turns.iter().filter(|t| t.injected).count(),
            mean_distinct_2: tail.iter().map(|t| t.report.distinct_2).sum::<f64>() / n,
            mean_dispersion: tail.iter().map(|t| t.report.embedding_dispersion).sum::<f64>() / n,
            final_report: self.turns.last().map(|t| t.report).unwrap_or_default(),
        }
    }

    /// Turn-per-block text format ending with the summary line.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "# backrooms seed={} turns={} injection_rate={} window={} store_injected={}\n# opening_prompt={}\n",
            c.seed,
            c.turns,
            c.injection_rate,
            c.window,
            c.store_injected,
            one_line(&c.opening_prompt)
        );
        for t in &self.turns {
            out.push_str(&format!(
                "turn {}\nobservation: {}\ninjected: {}\ngenerated: {}\nmemory: {}\nmetrics: {}\n\n",
                t.index,
                one_line(&t.observation),
                t.injected,
                one_line(&t.generated),
                t.memory_ids.join(","),
                t.report
            ));
        }
        out.push_str(&format!("{}\n", self.summary()));
        out
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Find the summary line in a transcript file.
pub fn parse_transcript_summary(text: &str) -> Option<BackroomsSummary> {
    text.lines().rev().find_map(BackroomsSummary::parse)
}

/// Run the self-dialogue. Each turn plans exactly one text action with the
/// agent's planner and stores the result; nothing is posted anywhere.
pub fn run_backrooms(
    config: &BackroomsConfig,
    memory: &mut MemoryStore,
    generator: &dyn Generator,
) -> Result<DialogueTranscript, BackroomsError> {
    config.validate()?;
    let human = corpus_lines(HUMAN_CORPUS);
    let reference = LengthReference::from_texts(&human, LENGTH_TAIL_K);
    let plan_config = PlanConfig {
        max_actions_per_turn: 1,
        top_k: config.top_k,
        platforms: Vec::new(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xB4C4));
    let mut state = AgentState::new(config.seed, -1.0).with_weights([(ActionKind::PostText, 1.0)]);
    let mut turns: Vec<DialogueTurn> = Vec::with_capacity(config.turns);
    let mut generated_ids: Vec<String> = Vec::with_capacity(config.turns);

    for index in 0..config.turns {
        let wrap = |source: AgentError| BackroomsError::Turn { turn: index, source };
        let wrap_mem = |e: MemoryError| wrap(e.into());
        // Both variates are drawn every turn so matched seeds see the same stream.
        let inject = rng.random::<f64>() < config.injection_rate;
        let pick = rng.random_range(0..human.len());
        let mut memory_ids = Vec::new();
        let observation = if inject {
            let line = human[pick].to_string();
            if config.store_injected {
                let id = format!("br-human-{index:06}");
                memory
                    .insert_text(id.clone(), line.clone(), Source::Human, index as i64)
                    .map_err(wrap_mem)?;
                memory_ids.push(id);
            }
            line
        } else {
            turns
                .last()
                .map(|t| t.generated.clone())
                .unwrap_or_else(|| config.opening_prompt.clone())
        };

        state.turn_counter = index as u64;
        let requests = plan(&state, memory, &observation, Some(generator), &plan_config).map_err(wrap)?;
        let generated = requests
            .first()
            .map(|r| r.content.memory_text().to_string())
            .ok_or_else(|| wrap(AgentError::InvalidRequest("planner returned no action".into())))?;

        let id = format!("br-{index:06}");
        memory
            .insert_text(id.clone(), generated.clone(), Source::Agent, index as i64)
            .map_err(wrap_mem)?;
        memory_ids.push(id.clone());
        generated_ids.push(id);

        let window_ids = &generated_ids[generated_ids.len().saturating_sub(config.window)..];
        let records: Vec<_> = window_ids
            .iter()
            .map(|id| memory.get(id).expect("window ids were just stored"))
            .collect();
        let texts: Vec<&str> = records.iter().map(|r| r.text.as_str()).collect();
        let vectors: Vec<_> = records.iter().map(|r| r.vector.clone()).collect();
        let report = DiversityReport::for_texts(&texts, &vectors, reference.as_ref());

        turns.push(DialogueTurn {
            index,
            observation,
            injected: inject,
            generated,
            memory_ids,
            report,
        });
    }
    Ok(DialogueTranscript {
        config: config.clone(),
        turns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::MarkovGenerator;

    fn run(turns: usize, rate: f64, seed: u64) -> (DialogueTranscript, MemoryStore) {
        let mut mem = MemoryStore::default();
        let cfg = BackroomsConfig {
            turns,
            seed,
            injection_rate: rate,
            ..BackroomsConfig::default()
        };
        let t = run_backrooms(&cfg, &mut mem, &MarkovGenerator::bundled()).unwrap();
        (t, mem)
    }

    #[test]
    fn ten_turns_ten_agent_records() {
        let (t, mem) = run(10, 0.0, 1);
        assert_eq!(t.turns.len(), 10);
        assert_eq!(mem.len(), 10);
        assert!(mem.records().all(|r| r.source == Source::Agent));
        assert!(t.turns.iter().flat_map(|t| &t.memory_ids).all(|id| mem.contains(id)));
    }

    #[test]
    fn deterministic() {
        assert_eq!(run(30, 0.5, 4).0, run(30, 0.5, 4).0);
    }

    #[test]
    fn stored_injections_count() {
        let mut mem = MemoryStore::default();
        let cfg = BackroomsConfig {
            turns: 40,
            seed: 2,
            injection_rate: 0.5,
            store_injected: true,
            ..BackroomsConfig::default()
        };
        let t = run_backrooms(&cfg, &mut mem, &MarkovGenerator::bundled()).unwrap();
        let injected = t.turns.iter().filter(|t| t.injected).count();
        assert!(injected > 0);
        assert_eq!(mem.len(), 40 + injected);
    }

    #[test]
    fn summary_round_trips_through_text() {
        let (t, _) = run(12, 0.25, 3);
        let parsed = parse_transcript_summary(&t.to_text()).unwrap();
        assert_eq!(parsed, t.summary());
    }

    #[test]
    fn bad_rate_rejected() {
        let cfg = BackroomsConfig {
            injection_rate: 1.5,
            ..BackroomsConfig::default()
        };
        let mut mem = MemoryStore::default();
        assert!(matches!(
            run_backrooms(&cfg, &mut mem, &MarkovGenerator::bundled()),
            Err(BackroomsError::BadConfig(_))
        ));
    }
}
