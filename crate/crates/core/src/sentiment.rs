//! Lexicon sentiment scoring over a bundled word list.

use std::collections::HashSet;
use std::sync::OnceLock;

use thiserror::Error;

const BUNDLED: &str = include_str!("../data/sentiment_lexicon.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexiconError {
    #[error("line {line}: expected +word or -word, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("word {0:?} is listed as both positive and negative")]
    Conflict(String),
}

#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

impl Lexicon {
    /// One entry per line, `+word` or `-word`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut lex = Lexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || LexiconError::BadLine {
                line: i + 1,
                text: line.to_string(),
            };
            let (sign, word) = line.split_at(1);
            let word = word.trim().to_lowercase();
            if word.is_empty() || !word.chars().all(char::is_alphanumeric) {
                return Err(bad());
            }
            match sign {
                "+" => lex.positive.insert(word.clone()),
                "-" => lex.negative.insert(word.clone()),
                _ => return Err(bad()),
            };
            if lex.positive.contains(&word) && lex.negative.contains(&word) {
                return Err(LexiconError::Conflict(word));
            }
        }
        Ok(lex)
    }

    pub fn bundled() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::parse(BUNDLED).expect("bundled lexicon is well formed"))
    }

    pub fn is_positive(&self, word: &str) -> bool {
        self.positive.contains(word)
    }

    pub fn is_negative(&self, word: &str) -> bool {
        self.negative.contains(word)
    }

    pub fn positive_words(&self) -> impl Iterator<Item = &str> {
        self.positive.iter().map(String::as_str)
    }

    pub fn negative_words(&self) -> impl Iterator<Item = &str> {
        self.negative.iter().map(String::as_str)
    }

    /// `(pos - neg) / max(1, pos + neg)` over lexicon hits.
    pub fn score(&self, text: &str) -> f64 {
        let (mut pos, mut neg) = (0u64, 0u64);
        for word in words(text) {
            if self.positive.contains(&word) {
                pos += 1;
            } else if self.negative.contains(&word) {
                neg += 1;
            }
        }
        (pos as f64 - neg as f64) / (pos + neg).max(1) as f64
    }
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Score with the bundled lexicon.
pub fn sentiment_score(text: &str) -> f64 {
    Lexicon::bundled().score(text)
}
