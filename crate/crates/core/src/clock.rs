//! Shared timestamp source for t0/t1 instrumentation.
//!
//! Every node in one process clones the same [`Clock`], so timestamps come
//! from one monotonic source shifted by a wall-clock epoch offset captured
//! once at construction. Differences between timestamps taken by different
//! nodes are therefore monotonic-clock differences and never negative.

use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone)]
pub struct Clock {
    inner: Arc<ClockInner>,
}

#[derive(Debug)]
struct ClockInner {
    origin: Instant,
    epoch_offset_ns: u64,
}

impl Clock {
    pub fn new() -> Self {
        let origin = Instant::now();
        let epoch_offset_ns = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        Self {
            inner: Arc::new(ClockInner {
                origin,
                epoch_offset_ns,
            }),
        }
    }

    /// Nanoseconds since the Unix epoch, monotonic.
    pub fn now_ns(&self) -> u64 {
        self.inner.epoch_offset_ns + self.inner.origin.elapsed().as_nanos() as u64
    }

    /// Converts a timestamp from this clock back to an `Instant`.
    pub fn instant_at(&self, ts_ns: u64) -> Instant {
        let since = ts_ns.saturating_sub(self.inner.epoch_offset_ns);
        self.inner.origin + Duration::from_nanos(since)
    }
}

impl Default for Clock {
    fn default() -> Self {
        Self::new()
    }
}

pub fn ns_to_ms(ns: u64) -> f64 {
    ns as f64 / 1e6
}
