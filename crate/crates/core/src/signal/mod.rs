//! Synthetic ECG front-end: PQRST morphology, electrode noise, lead-off
//! detachment and the ADC that digitizes the conditioned output.

mod adc;
mod text;

pub use adc::{dequantize, quantize, AdcConfig};
pub use text::{read_analog_text, write_analog_text};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, ValidationError};
use crate::exec::{fill_chunks, Execution};

const TWO_PI: f64 = 2.0 * PI;

/// Samples generated per work unit when filling in parallel.
const GENERATE_CHUNK: usize = 4096;

/// Typical AD8232 single-supply heart-rate configuration (instrumentation
/// amplifier x100, output stage x11).
pub const DEFAULT_FRONTEND_GAIN: f64 = 1100.0;

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x - TWO_PI * ((x + PI) / TWO_PI).floor();
    // floor can land exactly on +pi through rounding
    if w >= PI {
        w - TWO_PI
    } else {
        w
    }
}

/// One Gaussian deflection of the beat (P, Q, R, S or T).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveParams {
    pub amplitude_mv: f64,
    pub center_rad: f64,
    pub width_rad: f64,
}

impl WaveParams {
    pub fn new(
        amplitude_mv: f64,
        center_rad: f64,
        width_rad: f64,
    ) -> Result<Self, ValidationError> {
        let w = Self {
            amplitude_mv,
            center_rad,
            width_rad,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(self.amplitude_mv.is_finite(), "amplitude_mv", || {
            format!("{} is not finite", self.amplitude_mv)
        })?;
        ensure(
            self.width_rad.is_finite() && self.width_rad > 0.0,
            "width_rad",
            || format!("{} must be > 0", self.width_rad),
        )?;
        ensure((-PI..PI).contains(&self.center_rad), "center_rad", || {
            format!("{} outside [-pi, pi)", self.center_rad)
        })
    }

    fn contribution(&self, phase: f64) -> f64 {
        let d = wrap_phase(phase - self.center_rad);
        self.amplitude_mv * (-(d * d) / (2.0 * self.width_rad * self.width_rad)).exp()
    }
}

/// Additive electrode-referred noise. Wander and mains are pure sinusoids
/// starting at zero phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub white_sigma_mv: f64,
    pub baseline_wander_amp_mv: f64,
    pub baseline_wander_hz: f64,
    pub mains_amp_mv: f64,
    pub mains_hz: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            white_sigma_mv: 0.0,
            baseline_wander_amp_mv: 0.0,
            baseline_wander_hz: 0.3,
            mains_amp_mv: 0.0,
            mains_hz: 50.0,
        }
    }
}

impl NoiseConfig {
    pub fn white(sigma_mv: f64) -> Self {
        Self {
            white_sigma_mv: sigma_mv,
            ..Self::default()
        }
    }

    pub fn is_silent(&self) -> bool {
        self.white_sigma_mv == 0.0 && self.baseline_wander_amp_mv == 0.0 && self.mains_amp_mv == 0.0
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        for (field, v) in [
            ("white_sigma_mv", self.white_sigma_mv),
            ("baseline_wander_amp_mv", self.baseline_wander_amp_mv),
            ("mains_amp_mv", self.mains_amp_mv),
        ] {
            ensure(v.is_finite() && v >= 0.0, field, || {
                format!("{v} must be >= 0")
            })?;
        }
        ensure(
            self.baseline_wander_hz.is_finite() && self.baseline_wander_hz > 0.0,
            "baseline_wander_hz",
            || format!("{} must be > 0", self.baseline_wander_hz),
        )?;
        ensure(
            self.mains_hz == 50.0 || self.mains_hz == 60.0,
            "mains_hz",
            || format!("{} must be 50 or 60", self.mains_hz),
        )
    }
}

/// Which electrode comparator reports detachment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeadWhich {
    Plus,
    Minus,
    Both,
}

impl LeadWhich {
    pub fn state(self) -> LeadState {
        match self {
            LeadWhich::Plus => LeadState::PLUS_OFF,
            LeadWhich::Minus => LeadState::MINUS_OFF,
            LeadWhich::Both => LeadState::BOTH_OFF,
        }
    }
}

impl FromStr for LeadWhich {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "plus" | "lo+" | "+" | "p" => Ok(LeadWhich::Plus),
            "minus" | "lo-" | "-" | "m" => Ok(LeadWhich::Minus),
            "both" | "b" => Ok(LeadWhich::Both),
            other => Err(ValidationError::new(
                "lead",
                format!("unknown lead {other:?} (expected plus, minus or both)"),
            )),
        }
    }
}

/// Scheduled electrode detachment over `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub which: LeadWhich,
}

impl LeadEvent {
    pub fn new(start_s: f64, end_s: f64, which: LeadWhich) -> Result<Self, ValidationError> {
        let e = Self {
            start_s,
            end_s,
            which,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(
            self.start_s.is_finite() && self.start_s >= 0.0,
            "start_s",
            || format!("{} must be >= 0", self.start_s),
        )?;
        ensure(
            self.end_s.is_finite() && self.end_s > self.start_s,
            "end_s",
            || format!("{} must exceed start {}", self.end_s, self.start_s),
        )
    }

    pub fn covers(&self, t_s: f64) -> bool {
        t_s >= self.start_s && t_s < self.end_s
    }
}

/// Parses `start:end:which`, e.g. `2:3:plus`.
impl FromStr for LeadEvent {
    type Err = ValidationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, end, which] = parts.as_slice() else {
            return Err(ValidationError::new(
                "lead_event",
                format!("{s:?} is not start:end:which"),
            ));
        };
        let num = |field: &'static str, v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| ValidationError::new(field, format!("{v:?}: {e}")))
        };
        LeadEvent::new(
            num("start_s", start)?,
            num("end_s", end)?,
            which.trim().parse()?,
        )
    }
}

/// LO+/LO- comparator outputs packed into two bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LeadState(u8);

impl LeadState {
    pub const ATTACHED: LeadState = LeadState(0);
    pub const PLUS_OFF: LeadState = LeadState(0b01);
    pub const MINUS_OFF: LeadState = LeadState(0b10);
    pub const BOTH_OFF: LeadState = LeadState(0b11);

    pub fn from_bits(bits: u8) -> Result<Self, ValidationError> {
        ensure(bits <= 0b11, "flags", || {
            format!("{bits} has bits above bit1")
        })?;
        Ok(LeadState(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn plus_off(self) -> bool {
        self.0 & 0b01 != 0
    }

    pub fn minus_off(self) -> bool {
        self.0 & 0b10 != 0
    }

    pub fn any_off(self) -> bool {
        self.0 != 0
    }

    pub fn union(self, other: LeadState) -> LeadState {
        LeadState(self.0 | other.0)
    }
}

impl fmt::Display for LeadState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Everything needed to synthesize a deterministic recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub heart_rate_bpm: f64,
    /// P, Q, R, S, T in that order.
    pub waves: [WaveParams; 5],
    pub baseline_mv: f64,
    pub noise: NoiseConfig,
    pub lead_events: Vec<LeadEvent>,
    pub seed: u64,
    /// Front-end amplification applied to the electrode signal (morphology
    /// plus noise) before it reaches the ADC.
    pub frontend_gain: f64,
    /// Output level, relative to the ADC baseline, while any lead is off.
    pub lead_off_mv: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        let w = |a, c, s| WaveParams {
            amplitude_mv: a,
            center_rad: c,
            width_rad: s,
        };
        Self {
            heart_rate_bpm: 60.0,
            waves: [
                w(0.15, -PI / 3.0, 0.25),
                w(-0.25, -PI / 12.0, 0.1),
                w(1.0, 0.0, 0.1),
                w(-0.3, PI / 12.0, 0.1),
                w(0.35, 5.0 * PI / 12.0, 0.4),
            ],
            baseline_mv: 0.0,
            noise: NoiseConfig::default(),
            lead_events: Vec::new(),
            seed: 0,
            frontend_gain: DEFAULT_FRONTEND_GAIN,
            lead_off_mv: AdcConfig::default().vref_v * 1000.0,
        }
    }
}

impl SynthParams {
    pub fn with_heart_rate(heart_rate_bpm: f64) -> Self {
        Self {
            heart_rate_bpm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(
            (20.0..=300.0).contains(&self.heart_rate_bpm),
            "heart_rate_bpm",
            || format!("{} outside [20, 300]", self.heart_rate_bpm),
        )?;
        for w in &self.waves {
            w.validate()?;
        }
        ensure(
            self.waves
                .windows(2)
                .all(|p| p[0].center_rad < p[1].center_rad),
            "waves",
            || "centers must increase strictly in P, Q, R, S, T order".into(),
        )?;
        ensure(self.baseline_mv.is_finite(), "baseline_mv", || {
            format!("{} is not finite", self.baseline_mv)
        })?;
        self.noise.validate()?;
        for e in &self.lead_events {
            e.validate()?;
        }
        ensure(
            self.frontend_gain.is_finite() && self.frontend_gain > 0.0,
            "frontend_gain",
            || format!("{} must be > 0", self.frontend_gain),
        )?;
        ensure(self.lead_off_mv.is_finite(), "lead_off_mv", || {
            format!("{} is not finite", self.lead_off_mv)
        })
    }

    /// Beat period in seconds.
    pub fn beat_period_s(&self) -> f64 {
        60.0 / self.heart_rate_bpm
    }

    /// Lead state at time `t_s`: union over every event covering it.
    pub fn lead_state_at(&self, t_s: f64) -> LeadState {
        self.lead_events
            .iter()
            .filter(|e| e.covers(t_s))
            .fold(LeadState::ATTACHED, |acc, e| acc.union(e.which.state()))
    }
}

/// Noise-free electrode potential at beat phase `phase` (radians).
pub fn beat_value(params: &SynthParams, phase: f64) -> f64 {
    params.baseline_mv
        + params
            .waves
            .iter()
            .map(|w| w.contribution(phase))
            .sum::<f64>()
}

/// Beat phase of sample `index`. Recordings start mid-diastole (phase -pi),
/// so the first R peak lands half a beat period in.
pub fn phase_at(params: &SynthParams, rate_hz: f64, index: u64) -> f64 {
    let beats = index as f64 * params.heart_rate_bpm / (60.0 * rate_hz);
    wrap_phase(-PI + TWO_PI * (beats - beats.floor()))
}

/// One conditioned, not yet digitized, front-end output sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalogSample {
    pub t_s: f64,
    pub value_mv: f64,
    pub lead_state: LeadState,
}

/// `floor(rate * duration)` tolerant of decimal inputs that are not exactly
/// representable (0.29 * 100 must give 29, not 28).
pub fn sample_count(rate_hz: f64, duration_s: f64) -> u64 {
    let x = rate_hz * duration_s;
    (x + 1e-9 * x.max(1.0)).floor() as u64
}

fn validate_timing(rate_hz: f64, duration_s: f64) -> Result<(), ValidationError> {
    ensure(rate_hz.is_finite() && rate_hz > 0.0, "rate_hz", || {
        format!("{rate_hz} must be > 0")
    })?;
    ensure(
        duration_s.is_finite() && duration_s > 0.0,
        "duration_s",
        || format!("{duration_s} must be > 0"),
    )
}

/// Generate `floor(rate_hz * duration_s)` samples from t = 0.
pub fn generate_analog(
    params: &SynthParams,
    rate_hz: f64,
    duration_s: f64,
) -> Result<Vec<AnalogSample>, ValidationError> {
    generate_analog_with(params, rate_hz, duration_s, Execution::default())
}

pub fn generate_analog_with(
    params: &SynthParams,
    rate_hz: f64,
    duration_s: f64,
    exec: Execution,
) -> Result<Vec<AnalogSample>, ValidationError> {
    validate_timing(rate_hz, duration_s)?;
    let n = sample_count(rate_hz, duration_s);
    generate_range(params, rate_hz, 0, n, exec)
}

/// Samples `start..start + count` of the infinite recording described by
/// `params`. Any partition of an index range yields the same values as
/// generating it in one piece.
pub fn generate_range(
    params: &SynthParams,
    rate_hz: f64,
    start: u64,
    count: u64,
    exec: Execution,
) -> Result<Vec<AnalogSample>, ValidationError> {
    params.validate()?;
    ensure(rate_hz.is_finite() && rate_hz > 0.0, "rate_hz", || {
        format!("{rate_hz} must be > 0")
    })?;
    let blank = AnalogSample {
        t_s: 0.0,
        value_mv: 0.0,
        lead_state: LeadState::ATTACHED,
    };
    let mut out = vec![blank; count as usize];
    fill_chunks(exec, &mut out, GENERATE_CHUNK, |offset, chunk| {
        fill_samples(params, rate_hz, start + offset as u64, chunk)
    });
    Ok(out)
}

fn fill_samples(params: &SynthParams, rate_hz: f64, first: u64, out: &mut [AnalogSample]) {
    let noise = &params.noise;
    let mut white = WhiteNoise::at(params.seed, first);
    for (k, slot) in out.iter_mut().enumerate() {
        let index = first + k as u64;
        let t_s = index as f64 / rate_hz;
        let lead_state = params.lead_state_at(t_s);
        // the generator advances regardless so values never depend on lead state
        let z = white.next_gaussian();
        let value_mv = if lead_state.any_off() {
            params.lead_off_mv
        } else {
            let mut mv = beat_value(params, phase_at(params, rate_hz, index));
            mv += noise.white_sigma_mv * z;
            mv += noise.baseline_wander_amp_mv * (TWO_PI * noise.baseline_wander_hz * t_s).sin();
            mv += noise.mains_amp_mv * (TWO_PI * noise.mains_hz * t_s).sin();
            mv * params.frontend_gain
        };
        *slot = AnalogSample {
            t_s,
            value_mv,
            lead_state,
        };
    }
}

/// Counter-addressable standard normal stream: sample `i` always consumes
/// the same two 64-bit words of the ChaCha8 keystream, so any chunk can seek
/// straight to its first index.
struct WhiteNoise {
    rng: ChaCha8Rng,
}

impl WhiteNoise {
    const WORDS_PER_SAMPLE: u128 = 4; // two u64 = four u32 words

    fn at(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(index as u128 * Self::WORDS_PER_SAMPLE);
        Self { rng }
    }

    fn unit(&mut self) -> f64 {
        // 53 random mantissa bits, in (0, 1]
        ((self.rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    }

    // Box-Muller, cosine branch only
    fn next_gaussian(&mut self) -> f64 {
        let u1 = self.unit();
        let u2 = self.unit();
        (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos()
    }
}

#[cfg(test)]
mod tests;
