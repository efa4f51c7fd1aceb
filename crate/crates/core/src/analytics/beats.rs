//! Energy-threshold QRS detector: smooth, difference, square, integrate,
//! then pick local maxima above half the running mean of accepted peaks.

use serde::{Deserialize, Serialize};

use crate::signal::{dequantize, AdcConfig};
use crate::wire::StoredSample;

/// Minimum spacing between accepted beats.
pub const REFRACTORY_S: f64 = 0.2;
/// Shortest window the detector will run on.
pub const MIN_WINDOW_S: f64 = 2.0;

const SMOOTH_S: f64 = 0.025;
const DIFF_LAG_S: f64 = 0.02;
const INTEGRATE_S: f64 = 0.15;
const THRESHOLD_RATIO: f64 = 0.5;
const PEAK_MEMORY: usize = 8;
const RR_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BeatEstimate {
    pub beat_ts_us: Vec<u64>,
    pub bpm: f64,
    /// Share of RR intervals within 20% of the median interval.
    pub confidence: f64,
}

impl BeatEstimate {
    pub fn from_beats(beat_ts_us: Vec<u64>) -> Self {
        if beat_ts_us.len() < 2 {
            return Self {
                beat_ts_us,
                bpm: 0.0,
                confidence: 0.0,
            };
        }
        let n = beat_ts_us.len();
        let span_s = (beat_ts_us[n - 1] - beat_ts_us[0]) as f64 / 1e6;
        let mut rr: Vec<f64> = beat_ts_us
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64)
            .collect();
        rr.sort_by(f64::total_cmp);
        let median = rr[rr.len() / 2];
        let regular = rr
            .iter()
            .filter(|&&x| (x - median).abs() <= RR_TOLERANCE * median)
            .count();
        Self {
            bpm: 60.0 * (n - 1) as f64 / span_s,
            confidence: regular as f64 / rr.len() as f64,
            beat_ts_us,
        }
    }
}

/// Detect beats in stored samples. Lead-off samples are treated as gaps
/// (the last attached value is held) so rail saturation is not mistaken
/// for a QRS complex.
pub fn detect_beats(samples: &[StoredSample], rate_hz: u32, adc: &AdcConfig) -> BeatEstimate {
    let mut held = 0.0;
    let mv: Vec<f64> = samples
        .iter()
        .map(|s| {
            if s.flags == 0 {
                held = dequantize(s.code as u32, adc).unwrap_or(held);
            }
            held
        })
        .collect();
    let idx = detect_beats_mv(&mv, rate_hz as f64);
    BeatEstimate::from_beats(idx.into_iter().map(|i| samples[i].ts_us).collect())
}

fn window(seconds: f64, rate_hz: f64) -> usize {
    ((seconds * rate_hz).round() as usize).max(1)
}

/// Trailing moving average over `len` samples (shorter at the start).
fn moving_average(xs: &[f64], len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        acc += x;
        if i >= len {
            acc -= xs[i - len];
        }
        out.push(acc / (i + 1).min(len) as f64);
    }
    out
}

/// Beat sample indices for a millivolt trace. Returns nothing for traces
/// shorter than two seconds.
pub fn detect_beats_mv(mv: &[f64], rate_hz: f64) -> Vec<usize> {
    let n = mv.len();
    if rate_hz <= 0.0 || (n as f64) < MIN_WINDOW_S * rate_hz {
        return Vec::new();
    }
    let smooth_len = window(SMOOTH_S, rate_hz);
    let lag = window(DIFF_LAG_S, rate_hz);
    let integ_len = window(INTEGRATE_S, rate_hz);
    let refractory = window(REFRACTORY_S, rate_hz);

    let smooth = moving_average(mv, smooth_len);
    let energy: Vec<f64> = (0..n)
        .map(|i| {
            let d = if i >= lag {
                smooth[i] - smooth[i - lag]
            } else {
                0.0
            };
            d * d
        })
        .collect();
    let integrated = moving_average(&energy, integ_len);

    let learn = window(MIN_WINDOW_S, rate_hz).min(n);
    let mut peaks: Vec<f64> = Vec::with_capacity(PEAK_MEMORY);
    let initial = integrated[..learn].iter().copied().fold(0.0, f64::max);
    let mut accepted: Vec<(usize, f64)> = Vec::new();

    for i in 1..n - 1 {
        let v = integrated[i];
        if !(v > integrated[i - 1] && v >= integrated[i + 1]) {
            continue;
        }
        let mean = if peaks.is_empty() {
            initial
        } else {
            peaks.iter().sum::<f64>() / peaks.len() as f64
        };
        if v < THRESHOLD_RATIO * mean || v <= 0.0 {
            continue;
        }
        match accepted.last_mut() {
            Some(last) if i - last.0 < refractory => {
                // keep the stronger of two candidates inside the refractory period
                if v > last.1 {
                    *last = (i, v);
                    *peaks.last_mut().unwrap() = v;
                }
            }
            _ => {
                accepted.push((i, v));
                if peaks.len() == PEAK_MEMORY {
                    peaks.remove(0);
                }
                peaks.push(v);
            }
        }
    }

    // The energy peak trails the QRS by the filter delays; place each beat at
    // the largest deflection in the span that fed it.
    let reach = integ_len + smooth_len + lag;
    let mut beats: Vec<usize> = Vec::with_capacity(accepted.len());
    for (peak, _) in accepted {
        let lo = peak.saturating_sub(reach);
        let seg = &mv[lo..=peak];
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        let r = lo
            + seg
                .iter()
                .enumerate()
                .max_by(|a, b| (a.1 - mean).abs().total_cmp(&(b.1 - mean).abs()))
                .map(|(j, _)| j)
                .unwrap_or(0);
        if beats.last().is_none_or(|&prev| r >= prev + refractory) {
            beats.push(r);
        }
    }
    beats
}
