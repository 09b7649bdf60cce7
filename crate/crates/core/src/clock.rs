use std::sync::atomic::{AtomicI64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

/// Source of millisecond timestamps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> i64;
}

/// Deterministic clock that advances by a fixed step on every read.
#[derive(Debug)]
pub struct SimClock {
    next: AtomicI64,
    step: i64,
}

/// 2024-10-01T00:00:00Z
pub const SIM_EPOCH_MS: i64 = 1_727_740_800_000;

impl SimClock {
    pub fn new(start_ms: i64, step_ms: i64) -> Self {
        Self {
            next: AtomicI64::new(start_ms),
            step: step_ms,
        }
    }
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new(SIM_EPOCH_MS, 1_000)
    }
}

impl Clock for SimClock {
    fn now_ms(&self) -> i64 {
        self.next.fetch_add(self.step, Ordering::Relaxed)
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or_default()
    }
}
