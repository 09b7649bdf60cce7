//! The autonomous loop: plan, generate, sentiment-gate, dispatch, and
//! integrate engagement feedback. Every state change is event-sourced into a
//! [`MessageLog`] so the final state can be rebuilt by replay.
//!
//! Planning is two-tier: action kinds are picked by sampling the normalized
//! strategy weights, then each request's content is filled by a [`Generator`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{generate_art, Address, ChainError, Ledger, MintRecord, TokenParams, TokenRecord};
use crate::clock::Clock;
use crate::generator::{Generator, GeneratorError};
use crate::hashing::{derive_seed, sha256_hex};
use crate::memory::{MemoryError, MemoryStore, Source, DEFAULT_TOP_K};
use crate::platforms::{
    ConnectorError, ConnectorMap, EngagementMetrics, LogEntry, LogError, LogKind, MessageLog, PostReceipt, TWITTER,
};
use crate::sentiment::sentiment_score;

pub const DEFAULT_ETA: f64 = 0.1;
pub const DEFAULT_MAX_ACTIONS_PER_TURN: usize = 3;
pub const DEFAULT_TOKEN_SUPPLY: u64 = 1_000_000_000;
pub const IMAGE_TARGET: &str = "image";
pub const CHAIN_TARGET: &str = "chain";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    PostText,
    GenerateImage,
    MintArt,
    DeployToken,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] = [
        ActionKind::PostText,
        ActionKind::GenerateImage,
        ActionKind::MintArt,
        ActionKind::DeployToken,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActionKind::PostText => "post_text",
            ActionKind::GenerateImage => "generate_image",
            ActionKind::MintArt => "mint_art",
            ActionKind::DeployToken => "deploy_token",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActionKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown action kind {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no generator configured")]
    NoGenerator,
    #[error("observation is empty")]
    EmptyObservation,
    #[error("invalid agent state: {0}")]
    InvalidState(String),
    #[error("invalid action request: {0}")]
    InvalidRequest(String),
    #[error("no chain configured")]
    NoChain,
    #[error("no connector for {0}")]
    NoConnector(String),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Connector(#[from] ConnectorError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub persona_seed: u64,
    pub strategy_weights: BTreeMap<ActionKind, f64>,
    pub turn_counter: u64,
    pub sentiment_threshold: f64,
}

impl AgentState {
    /// Equal weight on every action kind.
    pub fn new(persona_seed: u64, sentiment_threshold: f64) -> Self {
        Self {
            persona_seed,
            strategy_weights: ActionKind::ALL.iter().map(|k| (*k, 1.0)).collect(),
            turn_counter: 0,
            sentiment_threshold,
        }
    }

    pub fn with_weights(mut self, weights: impl IntoIterator<Item = (ActionKind, f64)>) -> Self {
        self.strategy_weights = weights.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::InvalidState(m));
        if !(-1.0..=1.0).contains(&self.sentiment_threshold) {
            return bad(format!(
                "sentiment threshold {} outside [-1, 1]",
                self.sentiment_threshold
            ));
        }
        if let Some((k, w)) = self.strategy_weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return bad(format!("weight for {k} is {w}"));
        }
        if !self.strategy_weights.values().any(|w| *w > 0.0) {
            return bad("no action kind has positive weight".into());
        }
        Ok(())
    }

    /// Weights scaled to sum to one.
    pub fn normalized_weights(&self) -> BTreeMap<ActionKind, f64> {
        let total: f64 = self.strategy_weights.values().sum();
        self.strategy_weights
            .iter()
            .map(|(k, w)| (*k, if total > 0.0 { w / total } else { 0.0 }))
            .collect()
    }

    /// SHA-256 over the exact bit patterns of every field.
    pub fn state_hash(&self) -> String {
        let mut canon = format!(
            "persona={}|turn={}|threshold={:016x}",
            self.persona_seed,
            self.turn_counter,
            self.sentiment_threshold.to_bits()
        );
        for (k, w) in &self.strategy_weights {
            canon.push_str(&format!("|{k}={:016x}", w.to_bits()));
        }
        sha256_hex(canon.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Payload {
    Text {
        text: String,
    },
    Art {
        theme: String,
        seed: u64,
    },
    Token {
        name: String,
        symbol: String,
        total_supply: u64,
    },
}

impl Payload {
    /// The text stored in memory when the action succeeds.
    pub fn memory_text(&self) -> &str {
        match self {
            Payload::Text { text } => text,
            Payload::Art { theme, .. } => theme,
            Payload::Token { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub kind: ActionKind,
    pub target: String,
    pub content: Payload,
    /// Memory ids retrieved as context while planning.
    pub provenance: Vec<String>,
}

impl ActionRequest {
    pub fn validate(&self) -> Result<(), AgentError> {
        let ok = match (&self.kind, &self.content) {
            (ActionKind::PostText, Payload::Text { text }) => !text.trim().is_empty(),
            (ActionKind::GenerateImage | ActionKind::MintArt, Payload::Art { theme, .. }) => !theme.trim().is_empty(),
            (
                ActionKind::DeployToken,
                Payload::Token {
                    name,
                    symbol,
                    total_supply,
                },
            ) => !name.trim().is_empty() && !symbol.is_empty() && *total_supply > 0,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(AgentError::InvalidRequest(format!(
                "{} with {:?}",
                self.kind, self.content
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum GateDecision {
    Pass,
    Blocked { reason: String },
}

impl GateDecision {
    pub fn passed(&self) -> bool {
        matches!(self, GateDecision::Pass)
    }
}

/// Block text posts scoring below `threshold`; other kinds always pass.
pub fn gate(request: &ActionRequest, threshold: f64) -> GateDecision {
    match (&request.kind, &request.content) {
        (ActionKind::PostText, Payload::Text { text }) => {
            let score = sentiment_score(text);
            if score < threshold {
                GateDecision::Blocked {
                    reason: format!("sentiment {score} below threshold {threshold}"),
                }
            } else {
                GateDecision::Pass
            }
        }
        _ => GateDecision::Pass,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionReceipt {
    Posted(PostReceipt),
    ImageGenerated { art_hash: String, width: u32, height: u32 },
    Minted(MintRecord),
    Deployed(TokenRecord),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindEngagement {
    pub kind: ActionKind,
    pub metrics: EngagementMetrics,
}

/// Multiply each weight by its factor and renormalize to sum one. Every
/// factor must be positive.
pub fn apply_multiplicative_update(
    state: &AgentState,
    factors: &BTreeMap<ActionKind, f64>,
) -> Result<AgentState, AgentError> {
    if let Some((k, f)) = factors.iter().find(|(_, f)| !(f.is_finite() && **f > 0.0)) {
        return Err(AgentError::InvalidState(format!("update factor for {k} is {f}")));
    }
    let mut next = state.clone();
    for (k, w) in next.strategy_weights.iter_mut() {
        *w *= factors.get(k).copied().unwrap_or(1.0);
    }
    let total: f64 = next.strategy_weights.values().sum();
    for w in next.strategy_weights.values_mut() {
        *w /= total;
    }
    Ok(next)
}

/// Multiplicative-weights update from engagement. Each kind's engagement is
/// summed and divided by the largest per-kind sum, then
/// `w <- w * (1 + eta * normalized)` and the weights are renormalized.
/// An empty list leaves the state unchanged.
pub fn integrate_feedback(state: &AgentState, engagements: &[KindEngagement], eta: f64) -> AgentState {
    if engagements.is_empty() {
        return state.clone();
    }
    let mut totals: BTreeMap<ActionKind, f64> = BTreeMap::new();
    for e in engagements {
        *totals.entry(e.kind).or_default() += e.metrics.total() as f64;
    }
    let max = totals.values().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return state.clone();
    }
    let factors: BTreeMap<ActionKind, f64> = totals.into_iter().map(|(k, t)| (k, 1.0 + eta * t / max)).collect();
    apply_multiplicative_update(state, &factors).expect("factors are at least one")
}

pub fn sample_kinds(state: &AgentState, n: usize, rng: &mut impl Rng) -> Result<Vec<ActionKind>, AgentError> {
    state.validate()?;
    let weights = state.normalized_weights();
    let kinds: Vec<ActionKind> = weights.keys().copied().collect();
    let dist = WeightedIndex::new(weights.values().copied()).map_err(|e| AgentError::InvalidState(e.to_string()))?;
    Ok((0..n).map(|_| kinds[dist.sample(rng)]).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub max_actions_per_turn: usize,
    pub top_k: usize,
    /// Platforms text posts may target.
    pub platforms: Vec<String>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            max_actions_per_turn: DEFAULT_MAX_ACTIONS_PER_TURN,
            top_k: DEFAULT_TOP_K,
            platforms: vec![TWITTER.to_string()],
        }
    }
}

fn token_from_text(text: &str) -> (String, String) {
    let words: Vec<&str> = text.split_whitespace().take(3).collect();
    let name = words.join(" ");
    let mut symbol: String = words
        .iter()
        .flat_map(|w| w.chars().filter(char::is_ascii_alphabetic).take(2))
        .map(|c| c.to_ascii_uppercase())
        .take(6)
        .collect();
    if symbol.is_empty() {
        symbol = "ZZZ".into();
    }
    (name, symbol)
}

/// Plan one turn: retrieve context, pick action kinds by weight, fill content.
/// Deterministic for fixed (state, memory, observation).
pub fn plan(
    state: &AgentState,
    memory: &MemoryStore,
    observation: &str,
    generator: Option<&dyn Generator>,
    config: &PlanConfig,
) -> Result<Vec<ActionRequest>, AgentError> {
    let generator = generator.ok_or(AgentError::NoGenerator)?;
    if observation.trim().is_empty() {
        return Err(AgentError::EmptyObservation);
    }
    state.validate()?;
    let retrieved = if memory.is_empty() || config.top_k == 0 {
        Vec::new()
    } else {
        memory.retrieve(observation, config.top_k)?
    };
    let provenance: Vec<String> = retrieved.iter().map(|r| r.record.id.clone()).collect();
    let context: Vec<String> = retrieved.into_iter().map(|r| r.record.text).collect();

    let plan_seed = derive_seed(state.persona_seed, state.turn_counter);
    let mut rng = ChaCha8Rng::seed_from_u64(plan_seed);
    let n = if config.max_actions_per_turn == 0 {
        0
    } else {
        rng.random_range(1..=config.max_actions_per_turn)
    };
    let kinds = sample_kinds(state, n, &mut rng)?;

    let mut requests = Vec::with_capacity(n);
    for (i, kind) in kinds.into_iter().enumerate() {
        let seed = derive_seed(plan_seed, i as u64 + 1);
        let text = generator.generate(observation, &context, seed)?;
        if text.trim().is_empty() {
            return Err(GeneratorError::Empty.into());
        }
        let (target, content) = match kind {
            ActionKind::PostText => {
                let target = if config.platforms.is_empty() {
                    TWITTER.to_string()
                } else {
                    config.platforms[rng.random_range(0..config.platforms.len())].clone()
                };
                (target, Payload::Text { text })
            }
            ActionKind::GenerateImage => (IMAGE_TARGET.to_string(), Payload::Art { theme: text, seed }),
            ActionKind::MintArt => (CHAIN_TARGET.to_string(), Payload::Art { theme: text, seed }),
            ActionKind::DeployToken => {
                let (name, symbol) = token_from_text(&text);
                (
                    CHAIN_TARGET.to_string(),
                    Payload::Token {
                        name,
                        symbol,
                        total_supply: DEFAULT_TOKEN_SUPPLY,
                    },
                )
            }
        };
        let request = ActionRequest {
            kind,
            target,
            content,
            provenance: provenance.clone(),
        };
        request.validate()?;
        requests.push(request);
    }
    Ok(requests)
}

/// Everything recorded in the message log. Only `Genesis`, `Plan` and
/// `Feedback` change the agent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AgentEvent {
    Genesis {
        state: AgentState,
        eta: f64,
    },
    Observation {
        turn: u64,
        text: String,
        memory_id: Option<String>,
    },
    Plan {
        turn: u64,
        requests: Vec<ActionRequest>,
    },
    Gate {
        turn: u64,
        index: usize,
        decision: GateDecision,
    },
    Dispatch {
        turn: u64,
        index: usize,
        kind: ActionKind,
        target: String,
    },
    Receipt {
        turn: u64,
        index: usize,
        receipt: ActionReceipt,
        memory_id: String,
    },
    Error {
        turn: u64,
        index: Option<usize>,
        message: String,
    },
    Feedback {
        turn: u64,
        engagements: Vec<KindEngagement>,
    },
}

impl AgentEvent {
    pub fn log_kind(&self) -> LogKind {
        match self {
            AgentEvent::Genesis { .. } | AgentEvent::Feedback { .. } => LogKind::Feedback,
            AgentEvent::Observation { .. } => LogKind::Observation,
            AgentEvent::Plan { .. } => LogKind::Plan,
            AgentEvent::Gate { .. } => LogKind::Gate,
            AgentEvent::Dispatch { .. } => LogKind::Dispatch,
            AgentEvent::Receipt { .. } => LogKind::Receipt,
            AgentEvent::Error { .. } => LogKind::Error,
        }
    }
}

/// Rebuild the agent state from a log. The first entry must be the genesis.
pub fn replay_entries(entries: &[LogEntry]) -> Result<AgentState, LogError> {
    let corrupt = |offset: u64, m: String| LogError::CorruptLog(format!("offset {offset}: {m}"));
    let mut state: Option<(AgentState, f64)> = None;
    for (i, entry) in entries.iter().enumerate() {
        if entry.offset != i as u64 {
            return Err(corrupt(entry.offset, format!("expected offset {i}")));
        }
        let event: AgentEvent =
            serde_json::from_str(&entry.payload).map_err(|e| corrupt(entry.offset, e.to_string()))?;
        if event.log_kind() != entry.kind {
            return Err(corrupt(entry.offset, format!("event logged under kind {}", entry.kind)));
        }
        match (event, state.as_mut()) {
            (AgentEvent::Genesis { state: s, eta }, None) => {
                s.validate().map_err(|e| corrupt(entry.offset, e.to_string()))?;
                state = Some((s, eta));
            }
            (AgentEvent::Genesis { .. }, Some(_)) => {
                return Err(corrupt(entry.offset, "second genesis".into()));
            }
            (_, None) => return Err(corrupt(entry.offset, "log does not start with genesis".into())),
            (AgentEvent::Plan { turn, .. }, Some((s, _))) => {
                if turn != s.turn_counter {
                    return Err(corrupt(
                        entry.offset,
                        format!("plan for turn {turn} at turn {}", s.turn_counter),
                    ));
                }
                s.turn_counter += 1;
            }
            (AgentEvent::Feedback { engagements, .. }, Some((s, eta))) => {
                *s = integrate_feedback(s, &engagements, *eta);
            }
            _ => {}
        }
    }
    state
        .map(|(s, _)| s)
        .ok_or_else(|| LogError::CorruptLog("empty log".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub seed: u64,
    pub sentiment_threshold: f64,
    pub max_actions_per_turn: usize,
    pub eta: f64,
    pub top_k: usize,
    pub platforms: Vec<String>,
    /// Fetch engagement for this turn's posts and update weights at the end of each step.
    pub auto_feedback: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sentiment_threshold: 0.0,
            max_actions_per_turn: DEFAULT_MAX_ACTIONS_PER_TURN,
            eta: DEFAULT_ETA,
            top_k: DEFAULT_TOP_K,
            platforms: vec![TWITTER.to_string()],
            auto_feedback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub text: String,
    /// Store the observation in memory under this source, or not at all.
    pub store_as: Option<Source>,
}

impl Observation {
    pub fn human(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            store_as: Some(Source::Human),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOutcome {
    pub turn: u64,
    pub requests: Vec<ActionRequest>,
    pub decisions: Vec<GateDecision>,
    /// In plan order.
    pub receipts: Vec<(usize, ActionReceipt)>,
    pub errors: Vec<(usize, String)>,
    pub memory_ids: Vec<String>,
}

/// The agent runtime. Owns its memory, log, connectors and optional chain.
pub struct Agent {
    config: AgentConfig,
    state: AgentState,
    memory: MemoryStore,
    generator: Option<Arc<dyn Generator>>,
    connectors: ConnectorMap,
    chain: Option<(Ledger, Address)>,
    log: MessageLog,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agent")
            .field("config", &self.config)
            .field("state", &self.state)
            .field("memory", &self.memory.len())
            .field("log", &self.log.len())
            .finish_non_exhaustive()
    }
}

impl Agent {
    /// Create the agent and write the genesis event to `log`.
    pub fn new(
        config: AgentConfig,
        memory: MemoryStore,
        mut log: MessageLog,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, AgentError> {
        let state = AgentState::new(config.seed, config.sentiment_threshold);
        state.validate()?;
        if !log.is_empty() {
            return Err(AgentError::InvalidState("log already has entries".into()));
        }
        let genesis = AgentEvent::Genesis {
            state: state.clone(),
            eta: config.eta,
        };
        let payload = serde_json::to_string(&genesis).expect("events serialize");
        log.append(genesis.log_kind(), clock.now_ms(), &payload)?;
        Ok(Self {
            config,
            state,
            memory,
            generator: None,
            connectors: ConnectorMap::new(),
            chain: None,
            log,
            clock,
        })
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = Some(generator);
        self
    }

    pub fn with_connectors(mut self, connectors: ConnectorMap) -> Self {
        self.connectors = connectors;
        self
    }

    pub fn with_chain(mut self, ledger: Ledger, wallet: Address) -> Self {
        self.chain = Some((ledger, wallet));
        self
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn memory(&self) -> &MemoryStore {
        &self.memory
    }

    pub fn log(&self) -> &MessageLog {
        &self.log
    }

    pub fn ledger(&self) -> Option<&Ledger> {
        self.chain.as_ref().map(|(l, _)| l)
    }

    pub fn connectors(&self) -> &ConnectorMap {
        &self.connectors
    }

    pub fn into_parts(self) -> (AgentState, MemoryStore, MessageLog, Option<Ledger>) {
        (self.state, self.memory, self.log, self.chain.map(|(l, _)| l))
    }

    fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            max_actions_per_turn: self.config.max_actions_per_turn,
            top_k: self.config.top_k,
            platforms: self.config.platforms.clone(),
        }
    }

    fn record(&mut self, event: &AgentEvent) -> Result<u64, AgentError> {
        let payload = serde_json::to_string(event).expect("events serialize");
        Ok(self.log.append(event.log_kind(), self.clock.now_ms(), &payload)?)
    }

    fn dispatch(&mut self, request: &ActionRequest) -> Result<ActionReceipt, AgentError> {
        match (&request.kind, &request.content) {
            (ActionKind::PostText, Payload::Text { text }) => {
                let connector = self
                    .connectors
                    .get(&request.target)
                    .ok_or_else(|| AgentError::NoConnector(request.target.clone()))?;
                Ok(ActionReceipt::Posted(connector.post(text)?))
            }
            (ActionKind::GenerateImage, Payload::Art { theme, seed }) => {
                let art = generate_art(*seed, theme, crate::chain::DEFAULT_WIDTH, crate::chain::DEFAULT_HEIGHT);
                Ok(ActionReceipt::ImageGenerated {
                    art_hash: art.content_hash(),
                    width: art.width,
                    height: art.height,
                })
            }
            (ActionKind::MintArt, Payload::Art { theme, seed }) => {
                let (ledger, wallet) = self.chain.as_mut().ok_or(AgentError::NoChain)?;
                let art = generate_art(*seed, theme, crate::chain::DEFAULT_WIDTH, crate::chain::DEFAULT_HEIGHT);
                Ok(ActionReceipt::Minted(ledger.mint_nft(wallet, &art)?))
            }
            (
                ActionKind::DeployToken,
                Payload::Token {
                    name,
                    symbol,
                    total_supply,
                },
            ) => {
                let (ledger, wallet) = self.chain.as_mut().ok_or(AgentError::NoChain)?;
                let params = TokenParams {
                    name: name.clone(),
                    symbol: symbol.clone(),
                    total_supply: *total_supply,
                };
                Ok(ActionReceipt::Deployed(ledger.deploy_token(wallet, params)?))
            }
            _ => Err(AgentError::InvalidRequest(format!(
                "{} with {:?}",
                request.kind, request.content
            ))),
        }
    }

    /// Run one turn. Blocked requests are logged and skipped; a failing
    /// request is logged as an error and the turn continues.
    pub fn step(&mut self, observation: &Observation) -> Result<TurnOutcome, AgentError> {
        if observation.text.trim().is_empty() {
            return Err(AgentError::EmptyObservation);
        }
        let generator = self.generator.clone().ok_or(AgentError::NoGenerator)?;
        let turn = self.state.turn_counter;

        let obs_id = match observation.store_as {
            Some(source) => {
                let id = format!("obs-{turn:06}");
                self.memory
                    .insert_text(id.clone(), observation.text.clone(), source, self.clock.now_ms())?;
                Some(id)
            }
            None => None,
        };
        self.record(&AgentEvent::Observation {
            turn,
            text: observation.text.clone(),
            memory_id: obs_id.clone(),
        })?;

        let requests = plan(
            &self.state,
            &self.memory,
            &observation.text,
            Some(generator.as_ref()),
            &self.plan_config(),
        )?;
        self.record(&AgentEvent::Plan {
            turn,
            requests: requests.clone(),
        })?;
        self.state.turn_counter += 1;

        let mut outcome = TurnOutcome {
            turn,
            requests: requests.clone(),
            decisions: Vec::with_capacity(requests.len()),
            receipts: Vec::new(),
            errors: Vec::new(),
            memory_ids: obs_id.into_iter().collect(),
        };
        for (index, request) in requests.iter().enumerate() {
            let decision = gate(request, self.state.sentiment_threshold);
            self.record(&AgentEvent::Gate {
                turn,
                index,
                decision: decision.clone(),
            })?;
            outcome.decisions.push(decision.clone());
            if !decision.passed() {
                continue;
            }
            self.record(&AgentEvent::Dispatch {
                turn,
                index,
                kind: request.kind,
                target: request.target.clone(),
            })?;
            match self.dispatch(request) {
                Ok(receipt) => {
                    let memory_id = format!("gen-{turn:06}-{index}");
                    self.memory.insert_text(
                        memory_id.clone(),
                        request.content.memory_text(),
                        Source::Agent,
                        self.clock.now_ms(),
                    )?;
                    self.record(&AgentEvent::Receipt {
                        turn,
                        index,
                        receipt: receipt.clone(),
                        memory_id: memory_id.clone(),
                    })?;
                    outcome.memory_ids.push(memory_id);
                    outcome.receipts.push((index, receipt));
                }
                Err(e) => {
                    let message = e.to_string();
                    self.record(&AgentEvent::Error {
                        turn,
                        index: Some(index),
                        message: message.clone(),
                    })?;
                    outcome.errors.push((index, message));
                }
            }
        }

        if self.config.auto_feedback {
            let engagements = self.collect_engagement(&outcome.receipts)?;
            self.integrate(turn, engagements)?;
        }
        Ok(outcome)
    }

    /// Engagement for posted receipts. Fetch failures are logged and skipped.
    pub fn collect_engagement(
        &mut self,
        receipts: &[(usize, ActionReceipt)],
    ) -> Result<Vec<KindEngagement>, AgentError> {
        let mut out = Vec::new();
        for (index, receipt) in receipts {
            let ActionReceipt::Posted(post) = receipt else {
                continue;
            };
            let fetched = self
                .connectors
                .get(&post.platform)
                .ok_or_else(|| AgentError::NoConnector(post.platform.clone()))
                .and_then(|c| c.fetch_engagement(post.post_id).map_err(AgentError::from));
            match fetched {
                Ok(metrics) => out.push(KindEngagement {
                    kind: ActionKind::PostText,
                    metrics,
                }),
                Err(e) => {
                    self.record(&AgentEvent::Error {
                        turn: self.state.turn_counter.saturating_sub(1),
                        index: Some(*index),
                        message: e.to_string(),
                    })?;
                }
            }
        }
        Ok(out)
    }

    /// Apply and log a feedback event. Empty engagement is a no-op.
    pub fn integrate(&mut self, turn: u64, engagements: Vec<KindEngagement>) -> Result<(), AgentError> {
        if engagements.is_empty() {
            return Ok(());
        }
        self.state = integrate_feedback(&self.state, &engagements, self.config.eta);
        self.record(&AgentEvent::Feedback { turn, engagements })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SimClock;
    use crate::generator::{MarkovGenerator, ScriptedGenerator};
    use crate::platforms::default_connectors;

    fn state() -> AgentState {
        AgentState::new(7, 0.0)
    }

    fn engagement(kind: ActionKind, likes: u64) -> KindEngagement {
        KindEngagement {
            kind,
            metrics: EngagementMetrics {
                post_id: 1,
                likes,
                shares: 0,
                comments: 0,
            },
        }
    }

    #[test]
    fn action_kind_round_trips() {
        for k in ActionKind::ALL {
            assert_eq!(k.as_str().parse::<ActionKind>().unwrap(), k);
        }
    }

    #[test]
    fn invalid_states_rejected() {
        let zero = state().with_weights(ActionKind::ALL.map(|k| (k, 0.0)));
        assert!(zero.validate().is_err());
        let nan = state().with_weights([(ActionKind::PostText, f64::NAN)]);
        assert!(nan.validate().is_err());
        assert!(AgentState::new(0, 1.5).validate().is_err());
    }

    #[test]
    fn empty_feedback_is_identity() {
        let s = state();
        assert_eq!(integrate_feedback(&s, &[], 0.1), s);
    }

    #[test]
    fn positive_feedback_raises_weight() {
        let s = state();
        let before = s.normalized_weights()[&ActionKind::MintArt];
        let after = integrate_feedback(&s, &[engagement(ActionKind::MintArt, 5)], 0.1);
        assert!(after.normalized_weights()[&ActionKind::MintArt] > before);
    }

    #[test]
    fn equal_feedback_leaves_normalized_weights() {
        let s = state().with_weights([
            (ActionKind::PostText, 0.1),
            (ActionKind::GenerateImage, 0.2),
            (ActionKind::MintArt, 0.3),
            (ActionKind::DeployToken, 0.4),
        ]);
        let all: Vec<_> = ActionKind::ALL.iter().map(|k| engagement(*k, 9)).collect();
        let after = integrate_feedback(&s, &all, 0.1);
        for (k, w) in s.normalized_weights() {
            assert!((after.normalized_weights()[&k] - w).abs() <= 1e-12);
        }
    }

    #[test]
    fn multiplicative_update_rejects_nonpositive_factor() {
        let factors = BTreeMap::from([(ActionKind::PostText, 0.0)]);
        assert!(apply_multiplicative_update(&state(), &factors).is_err());
    }

    #[test]
    fn gate_examples() {
        let post = |text: &str| ActionRequest {
            kind: ActionKind::PostText,
            target: TWITTER.into(),
            content: Payload::Text { text: text.into() },
            provenance: vec![],
        };
        assert!(gate(&post("hate doom"), -1.0).passed());
        assert!(!gate(&post("hate doom hate love"), 0.0).passed());
        let mint = ActionRequest {
            kind: ActionKind::MintArt,
            target: CHAIN_TARGET.into(),
            content: Payload::Art {
                theme: "hate".into(),
                seed: 1,
            },
            provenance: vec![],
        };
        assert!(gate(&mint, 1.0).passed());
    }

    #[test]
    fn plan_requires_generator() {
        let mem = MemoryStore::default();
        assert!(matches!(
            plan(&state(), &mem, "hi", None, &PlanConfig::default()),
            Err(AgentError::NoGenerator)
        ));
    }

    #[test]
    fn plan_cold_start_and_degenerate_weights() {
        let mem = MemoryStore::default();
        let g = MarkovGenerator::bundled();
        let s = state().with_weights([(ActionKind::PostText, 1.0), (ActionKind::MintArt, 0.0)]);
        for turn in 0..20 {
            let mut s = s.clone();
            s.turn_counter = turn;
            let reqs = plan(&s, &mem, "hello there", Some(&g), &PlanConfig::default()).unwrap();
            assert!((1..=3).contains(&reqs.len()));
            assert!(reqs
                .iter()
                .all(|r| r.kind == ActionKind::PostText && r.provenance.is_empty()));
            let again = plan(&s, &mem, "hello there", Some(&g), &PlanConfig::default()).unwrap();
            assert_eq!(reqs, again);
        }
    }

    fn agent(lines: &[&str], threshold: f64) -> Agent {
        let clock: Arc<dyn Clock> = Arc::new(SimClock::default());
        let config = AgentConfig {
            seed: 3,
            sentiment_threshold: threshold,
            max_actions_per_turn: 1,
            ..AgentConfig::default()
        };
        Agent::new(config, MemoryStore::default(), MessageLog::in_memory(), clock.clone())
            .unwrap()
            .with_generator(Arc::new(ScriptedGenerator::new(lines.iter().copied()).unwrap()))
            .with_connectors(default_connectors(1, clock))
    }

    fn only_posts(mut a: Agent) -> Agent {
        a.state = a.state.clone().with_weights([(ActionKind::PostText, 1.0)]);
        a
    }

    #[test]
    fn blocked_turn_stores_only_observation() {
        let mut a = only_posts(agent(&["hate doom"], 0.0));
        let out = a.step(&Observation::human("good morning")).unwrap();
        assert_eq!(a.state().turn_counter, 1);
        assert!(out.receipts.is_empty());
        assert_eq!(a.memory().len(), 1);
    }

    #[test]
    fn passing_post_stores_two_records() {
        let mut a = only_posts(agent(&["love the bright noise"], 0.0));
        let out = a.step(&Observation::human("good morning")).unwrap();
        assert_eq!(out.receipts.len(), 1);
        assert_eq!(a.memory().len(), 2);
        assert!(a.memory().contains("gen-000000-0"));
    }

    #[test]
    fn connector_failure_is_isolated() {
        let clock: Arc<dyn Clock> = Arc::new(SimClock::default());
        let mut cfg = crate::platforms::ConnectorConfig::new(TWITTER, 1);
        cfg.fail_on.insert(2);
        let connectors = crate::platforms::build_connectors(vec![cfg], clock.clone());
        let config = AgentConfig {
            max_actions_per_turn: 2,
            ..AgentConfig::default()
        };
        let mut a = Agent::new(config, MemoryStore::default(), MessageLog::in_memory(), clock)
            .unwrap()
            .with_generator(Arc::new(ScriptedGenerator::new(["joy one", "joy two"]).unwrap()))
            .with_connectors(connectors);
        a.state = a.state.clone().with_weights([(ActionKind::PostText, 1.0)]);
        // Find a turn that plans two posts.
        loop {
            let out = a.step(&Observation::human("hello")).unwrap();
            if out.requests.len() == 2 {
                assert_eq!(out.receipts.len(), 1);
                assert_eq!(out.errors.len(), 1);
                break;
            }
            assert!(a.state().turn_counter < 50);
        }
    }

    #[test]
    fn replay_matches_live_state() {
        let mut a = agent(&["love joy", "bright hope", "hate doom"], 0.0);
        a.config.max_actions_per_turn = 3;
        for t in 0..10 {
            a.step(&Observation::human(format!("turn {t} is sunny"))).unwrap();
        }
        let replayed = replay_entries(a.log().entries()).unwrap();
        assert_eq!(replayed.state_hash(), a.state().state_hash());
        assert_ne!(
            a.state().normalized_weights(),
            AgentState::new(3, 0.0).normalized_weights()
        );
    }

    #[test]
    fn replay_rejects_missing_genesis() {
        let mut a = agent(&["love"], 0.0);
        a.step(&Observation::human("x")).unwrap();
        let entries: Vec<LogEntry> = a.log().entries()[1..]
            .iter()
            .enumerate()
            .map(|(i, e)| LogEntry {
                offset: i as u64,
                ..e.clone()
            })
            .collect();
        assert!(replay_entries(&entries).is_err());
    }

    #[test]
    fn token_symbol_shape() {
        let (name, symbol) = token_from_text("static dreams of the void");
        assert_eq!(name, "static dreams of");
        assert_eq!(symbol, "STDROF");
        assert!(crate::chain::validate_symbol(&symbol).is_ok());
    }
}
