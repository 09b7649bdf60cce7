//! Deterministic text generators standing in for a fine-tuned language model.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diversity::tokenize;
use crate::hashing::{derive_seed, fnv1a64};

pub const SEED_CORPUS: &str = include_str!("../data/seed_corpus.txt");
pub const HUMAN_CORPUS: &str = include_str!("../data/human_corpus.txt");

/// Non-empty lines of a bundled corpus.
pub fn corpus_lines(corpus: &str) -> Vec<&str> {
    corpus.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeneratorError {
    #[error("generator produced empty text")]
    Empty,
    #[error("generator backend failed: {0}")]
    Backend(String),
    #[error("bad generator config: {0}")]
    BadConfig(String),
}

/// Same (prompt, context, seed) must give the same text.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str, context: &[String], seed: u64) -> Result<String, GeneratorError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovConfig {
    pub min_words: usize,
    pub max_words: usize,
    /// Chance per word of jumping to a random vocabulary word.
    pub explore: f64,
    /// How many times prompt and context bigrams are counted relative to the base corpus.
    pub context_weight: usize,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        Self {
            min_words: 10,
            max_words: 22,
            explore: 0.05,
            context_weight: 4,
        }
    }
}

/// Bigram chain over a base corpus plus the prompt and retrieved context.
#[derive(Debug, Clone)]
pub struct MarkovGenerator {
    config: MarkovConfig,
    vocabulary: Vec<String>,
    base: BTreeMap<String, Vec<String>>,
}

fn add_bigrams(table: &mut BTreeMap<String, Vec<String>>, tokens: &[String], weight: usize) {
    for pair in tokens.windows(2) {
        let next = table.entry(pair[0].clone()).or_default();
        for _ in 0..weight {
            next.push(pair[1].clone());
        }
    }
}

impl MarkovGenerator {
    pub fn new(corpus: &str, config: MarkovConfig) -> Result<Self, GeneratorError> {
        if config.min_words == 0 || config.min_words > config.max_words {
            return Err(GeneratorError::BadConfig(format!(
                "word range {}..={} is empty",
                config.min_words, config.max_words
            )));
        }
        if !(0.0..=1.0).contains(&config.explore) {
            return Err(GeneratorError::BadConfig(format!(
                "explore {} outside [0, 1]",
                config.explore
            )));
        }
        let mut base = BTreeMap::new();
        let mut vocabulary = Vec::new();
        for line in corpus_lines(corpus) {
            let tokens = tokenize(line);
            add_bigrams(&mut base, &tokens, 1);
            vocabulary.extend(tokens);
        }
        vocabulary.sort();
        vocabulary.dedup();
        if vocabulary.is_empty() {
            return Err(GeneratorError::BadConfig("corpus has no words".into()));
        }
        Ok(Self {
            config,
            vocabulary,
            base,
        })
    }

    /// Chain over the bundled seed corpus.
    pub fn bundled() -> Self {
        Self::new(SEED_CORPUS, MarkovConfig::default()).expect("bundled corpus is usable")
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }
}

impl Generator for MarkovGenerator {
    fn generate(&self, prompt: &str, context: &[String], seed: u64) -> Result<String, GeneratorError> {
        let mut table = self.base.clone();
        let prompt_tokens = tokenize(prompt);
        add_bigrams(&mut table, &prompt_tokens, self.config.context_weight);
        for c in context {
            add_bigrams(&mut table, &tokenize(c), self.config.context_weight);
        }

        let mut key = fnv1a64(0, prompt.as_bytes());
        for c in context {
            key = fnv1a64(key, c.as_bytes());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, key));
        let n = rng.random_range(self.config.min_words..=self.config.max_words);
        let random_word = |rng: &mut ChaCha8Rng| self.vocabulary[rng.random_range(0..self.vocabulary.len())].clone();

        let mut word = if prompt_tokens.is_empty() {
            random_word(&mut rng)
        } else {
            prompt_tokens[rng.random_range(0..prompt_tokens.len())].clone()
        };
        let mut out = Vec::with_capacity(n);
        out.push(word.clone());
        while out.len() < n {
            let explore = rng.random::<f64>() < self.config.explore;
            word = match table.get(&word) {
                Some(next) if !explore => next[rng.random_range(0..next.len())].clone(),
                _ => random_word(&mut rng),
            };
            out.push(word.clone());
        }
        Ok(out.join(" "))
    }
}

/// Replays a fixed list of responses in order, cycling. Useful for tests that
/// need exact control over content (for example to exercise the gate).
#[derive(Debug)]
pub struct ScriptedGenerator {
    lines: Vec<String>,
    cursor: Mutex<usize>,
}

impl ScriptedGenerator {
    pub fn new<I, S>(lines: I) -> Result<Self, GeneratorError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let lines: Vec<String> = lines.into_iter().map(Into::into).collect();
        if lines.is_empty() || lines.iter().any(|l| l.trim().is_empty()) {
            return Err(GeneratorError::Empty);
        }
        Ok(Self {
            lines,
            cursor: Mutex::new(0),
        })
    }
}

impl Generator for ScriptedGenerator {
    fn generate(&self, _prompt: &str, _context: &[String], _seed: u64) -> Result<String, GeneratorError> {
        let mut cursor = self.cursor.lock().unwrap_or_else(|e| e.into_inner());
        let line = self.lines[*cursor % self.lines.len()].clone();
        *cursor += 1;
        Ok(line)
    }
}
