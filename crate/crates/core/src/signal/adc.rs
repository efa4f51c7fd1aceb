use serde::{Deserialize, Serialize};

use crate::error::{ensure, ValidationError};

/// ESP32-style successive-approximation ADC: `bits` resolution over
/// `[0, vref_v]`, with the front-end output centered on `baseline_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig {
    pub vref_v: f64,
    pub bits: u8,
    pub baseline_v: f64,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self {
            vref_v: 3.3,
            bits: 12,
            baseline_v: 1.65,
        }
    }
}

impl AdcConfig {
    pub fn new(vref_v: f64, bits: u8, baseline_v: f64) -> Result<Self, ValidationError> {
        let adc = Self {
            vref_v,
            bits,
            baseline_v,
        };
        adc.validate()?;
        Ok(adc)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        ensure(
            self.vref_v.is_finite() && self.vref_v > 0.0,
            "vref_v",
            || format!("{} must be > 0", self.vref_v),
        )?;
        ensure((8..=16).contains(&self.bits), "bits", || {
            format!("{} outside [8, 16]", self.bits)
        })?;
        ensure(
            self.baseline_v.is_finite() && (0.0..=self.vref_v).contains(&self.baseline_v),
            "baseline_v",
            || format!("{} outside [0, {}]", self.baseline_v, self.vref_v),
        )
    }

    /// Number of distinct codes, `2^bits`.
    pub fn levels(&self) -> u32 {
        1u32 << self.bits
    }

    pub fn max_code(&self) -> u32 {
        self.levels() - 1
    }

    pub fn lsb_mv(&self) -> f64 {
        self.vref_v * 1000.0 / self.levels() as f64
    }
}

/// Digitize a front-end output (mV relative to the ADC baseline). Values
/// beyond either rail saturate.
pub fn quantize(value_mv: f64, adc: &AdcConfig) -> u32 {
    let v = adc.baseline_v + value_mv / 1000.0;
    let scaled = (v / adc.vref_v * adc.levels() as f64).floor();
    // NaN casts to 0
    scaled.clamp(0.0, adc.max_code() as f64) as u32
}

/// Mid-tread reconstruction of a code back to mV relative to baseline.
pub fn dequantize(code: u32, adc: &AdcConfig) -> Result<f64, ValidationError> {
    ensure(code < adc.levels(), "code", || {
        format!("{code} >= 2^{}", adc.bits)
    })?;
    Ok(((code as f64 + 0.5) / adc.levels() as f64 * adc.vref_v - adc.baseline_v) * 1000.0)
}
