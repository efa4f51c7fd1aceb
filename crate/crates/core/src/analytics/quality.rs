use serde::{Deserialize, Serialize};

use crate::error::{ensure, ValidationError};
use crate::exec::{map_slice, Execution};
use crate::signal::AdcConfig;
use crate::wire::StoredSample;

/// A run of identical codes at least this long counts as flatline.
pub const FLATLINE_RUN_S: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub window_start_us: u64,
    pub window_len_s: f64,
    pub in_range_fraction: f64,
    pub flatline_fraction: f64,
    pub lead_off_fraction: f64,
    /// `in_range * (1 - flatline) * (1 - lead_off)`
    pub score: f64,
}

impl QualityReport {
    pub fn from_fractions(
        window_start_us: u64,
        window_len_s: f64,
        in_range_fraction: f64,
        flatline_fraction: f64,
        lead_off_fraction: f64,
    ) -> Self {
        Self {
            window_start_us,
            window_len_s,
            in_range_fraction,
            flatline_fraction,
            lead_off_fraction,
            score: in_range_fraction * (1.0 - flatline_fraction) * (1.0 - lead_off_fraction),
        }
    }
}

pub fn quality_window(
    samples: &[StoredSample],
    rate_hz: u32,
    adc: &AdcConfig,
) -> Result<QualityReport, ValidationError> {
    ensure(!samples.is_empty(), "samples", || {
        "quality window is empty".into()
    })?;
    ensure(rate_hz > 0, "rate_hz", || "must be > 0".into())?;
    let n = samples.len() as f64;
    let max = adc.max_code();
    let in_range = samples
        .iter()
        .filter(|s| s.code > 0 && (s.code as u32) < max)
        .count();
    let lead_off = samples.iter().filter(|s| s.flags != 0).count();

    // n samples last n / rate seconds; runs reaching FLATLINE_RUN_S count
    let min_run = (FLATLINE_RUN_S * rate_hz as f64).ceil() as usize;
    let mut flat = 0;
    for run in samples.chunk_by(|a, b| a.code == b.code) {
        if run.len() >= min_run {
            flat += run.len();
        }
    }
    Ok(QualityReport::from_fractions(
        samples[0].ts_us,
        n / rate_hz as f64,
        in_range as f64 / n,
        flat as f64 / n,
        lead_off as f64 / n,
    ))
}

/// Score consecutive non-overlapping windows (the last may be short).
pub fn quality_windows(
    samples: &[StoredSample],
    rate_hz: u32,
    adc: &AdcConfig,
    window_len_s: f64,
    exec: Execution,
) -> Result<Vec<QualityReport>, ValidationError> {
    ensure(window_len_s > 0.0, "window_len_s", || "must be > 0".into())?;
    let len = ((window_len_s * rate_hz as f64).round() as usize).max(1);
    let windows: Vec<&[StoredSample]> = samples.chunks(len).collect();
    map_slice(exec, &windows, |w| quality_window(w, rate_hz, adc))
        .into_iter()
        .collect()
}
