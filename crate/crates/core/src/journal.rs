//! Dense-offset line journal shared by the message log and the chain ledger.
//!
//! One entry per line: `offset<TAB>kind<TAB>timestamp<TAB>payload`. Offsets
//! start at 0 and increase by exactly one. Payloads are single-line (JSON with
//! escaped control characters).

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt journal at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("field contains a tab or newline: {0:?}")]
    BadField(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalLine {
    pub offset: u64,
    pub kind: String,
    pub timestamp: i64,
    pub payload: String,
}

impl JournalLine {
    pub fn render(&self) -> String {
        format!("{}\t{}\t{}\t{}\n", self.offset, self.kind, self.timestamp, self.payload)
    }
}

fn check_field(s: &str) -> Result<(), JournalError> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(JournalError::BadField(s.to_string()));
    }
    Ok(())
}

/// Parse a whole journal, rejecting malformed lines and offset gaps.
pub fn parse(text: &str) -> Result<Vec<JournalLine>, JournalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let corrupt = |reason: &str| JournalError::Corrupt {
            line: i,
            reason: reason.to_string(),
        };
        let mut parts = line.splitn(4, '\t');
        let offset: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("bad offset"))?;
        let kind = parts.next().ok_or_else(|| corrupt("missing kind"))?;
        let timestamp: i64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("bad timestamp"))?;
        let payload = parts.next().ok_or_else(|| corrupt("missing payload"))?;
        if offset != i as u64 {
            return Err(corrupt(&format!("offset gap: expected {i}, found {offset}")));
        }
        out.push(JournalLine {
            offset,
            kind: kind.to_string(),
            timestamp,
            payload: payload.to_string(),
        });
    }
    Ok(out)
}

pub fn read(path: impl AsRef<Path>) -> Result<Vec<JournalLine>, JournalError> {
    parse(&std::fs::read_to_string(path)?)
}

/// Append-only writer. Each append is flushed before returning, so the file
/// prefix for the first n entries never changes once written.
#[derive(Debug)]
pub struct JournalWriter {
    path: Option<PathBuf>,
    sink: Option<BufWriter<File>>,
    next_offset: u64,
}

impl JournalWriter {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            sink: None,
            next_offset: 0,
        }
    }

    /// Start a fresh journal at `path`, truncating any existing file.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, JournalError> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path)?;
        Ok(Self {
            path: Some(path),
            sink: Some(BufWriter::new(file)),
            next_offset: 0,
        })
    }

    /// Continue an existing journal (or start one if absent).
    pub fn open_append(path: impl AsRef<Path>) -> Result<(Self, Vec<JournalLine>), JournalError> {
        let path = path.as_ref().to_path_buf();
        let existing = if path.exists() { read(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((
            Self {
                path: Some(path),
                sink: Some(BufWriter::new(file)),
                next_offset: existing.len() as u64,
            },
            existing,
        ))
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn next_offset(&self) -> u64 {
        self.next_offset
    }

    pub fn append(&mut self, kind: &str, timestamp: i64, payload: &str) -> Result<JournalLine, JournalError> {
        check_field(kind)?;
        check_field(payload)?;
        let line = JournalLine {
            offset: self.next_offset,
            kind: kind.to_string(),
            timestamp,
            payload: payload.to_string(),
        };
        if let Some(sink) = self.sink.as_mut() {
            sink.write_all(line.render().as_bytes())?;
            sink.flush()?;
        }
        self.next_offset += 1;
        Ok(line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_start_at_zero_and_are_dense() {
        let mut w = JournalWriter::in_memory();
        assert_eq!(w.append("k", 1, "{}").unwrap().offset, 0);
        assert_eq!(w.append("k", 2, "{}").unwrap().offset, 1);
    }

    #[test]
    fn gap_is_corrupt() {
        let text = "0\tk\t1\t{}\n2\tk\t2\t{}\n";
        assert!(matches!(parse(text), Err(JournalError::Corrupt { line: 1, .. })));
    }

    #[test]
    fn payload_may_contain_tabs_only_escaped() {
        let mut w = JournalWriter::in_memory();
        assert!(matches!(w.append("k", 0, "a\tb"), Err(JournalError::BadField(_))));
    }

    #[test]
    fn file_prefix_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.log");
        let mut w = JournalWriter::create(&path).unwrap();
        w.append("a", 0, "{\"x\":1}").unwrap();
        let before = std::fs::read(&path).unwrap();
        w.append("b", 1, "{\"x\":2}").unwrap();
        let after = std::fs::read(&path).unwrap();
        assert_eq!(&after[..before.len()], &before[..]);
        drop(w);
        let (mut w, existing) = JournalWriter::open_append(&path).unwrap();
        assert_eq!(existing.len(), 2);
        assert_eq!(w.append("c", 2, "{}").unwrap().offset, 2);
        assert_eq!(read(&path).unwrap().len(), 3);
    }
}
