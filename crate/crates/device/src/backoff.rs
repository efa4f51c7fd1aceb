use std::time::Duration;

use rand::Rng;

pub const BACKOFF_INITIAL_MS: u64 = 500;

/// `min(500 * 2^attempt, max_ms)` without jitter.
pub fn backoff_base_ms(attempt: u32, max_ms: u64) -> u64 {
    BACKOFF_INITIAL_MS
        .checked_shl(attempt)
        .filter(|v| v >> attempt == BACKOFF_INITIAL_MS)
        .unwrap_or(u64::MAX)
        .min(max_ms)
}

/// Base delay plus uniform jitter of up to 10% of it.
pub fn backoff_delay<R: Rng + ?Sized>(attempt: u32, max_ms: u64, rng: &mut R) -> Duration {
    let base = backoff_base_ms(attempt, max_ms);
    let jitter = rng.random_range(0.0..=0.1) * base as f64;
    Duration::from_micros(base * 1000 + (jitter * 1000.0) as u64)
}
