use std::time::Duration;

use telecg_core::signal::AdcConfig;
use telecg_core::ValidationError;

pub const DEFAULT_RATE_HZ: u32 = 250;
pub const DEFAULT_BATCH_SIZE: usize = 50;

#[derive(Debug, Clone)]
pub struct DeviceConfig {
    pub device_id: String,
    pub patient_id: String,
    pub server_url: String,
    pub sample_rate_hz: u32,
    pub batch_size: usize,
    /// Ring buffer size in samples.
    pub buffer_capacity: usize,
    pub max_backoff_ms: u64,
    pub adc: AdcConfig,
    /// Pace emission against the wall clock instead of running flat out.
    pub realtime: bool,
    /// Session epoch (µs since Unix epoch); wall clock at start when unset.
    pub epoch_us: Option<u64>,
    /// How long to keep retrying after the last sample has been produced.
    pub drain_timeout: Duration,
    /// Attempts at opening a session while the server is unreachable.
    pub connect_attempts: u32,
}

impl DeviceConfig {
    pub fn new(device_id: impl Into<String>, server_url: impl Into<String>) -> Self {
        Self {
            device_id: device_id.into(),
            patient_id: "demo-patient".into(),
            server_url: server_url.into(),
            sample_rate_hz: DEFAULT_RATE_HZ,
            batch_size: DEFAULT_BATCH_SIZE,
            buffer_capacity: 60 * DEFAULT_RATE_HZ as usize,
            max_backoff_ms: 30_000,
            adc: AdcConfig::default(),
            realtime: false,
            epoch_us: None,
            drain_timeout: Duration::from_secs(30),
            connect_attempts: 8,
        }
    }

    /// Set the rate and resize the buffer to its default of 60 s of samples.
    pub fn with_rate(mut self, rate_hz: u32) -> Self {
        self.sample_rate_hz = rate_hz;
        self.buffer_capacity = 60 * rate_hz as usize;
        self
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let id_ok = !self.device_id.is_empty()
            && self.device_id.len() <= 64
            && self
                .device_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !id_ok {
            return Err(ValidationError::new(
                "device_id",
                format!("{:?} must be 1-64 chars of [a-zA-Z0-9_-]", self.device_id),
            ));
        }
        if self.sample_rate_hz == 0 {
            return Err(ValidationError::new("sample_rate_hz", "must be > 0"));
        }
        if self.batch_size == 0 || self.batch_size > u16::MAX as usize {
            return Err(ValidationError::new("batch_size", "must be in 1..=65535"));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(ValidationError::new(
                "buffer_capacity",
                format!(
                    "{} is smaller than batch_size {}",
                    self.buffer_capacity, self.batch_size
                ),
            ));
        }
        if self.max_backoff_ms == 0 {
            return Err(ValidationError::new("max_backoff_ms", "must be > 0"));
        }
        self.adc.validate()
    }
}
