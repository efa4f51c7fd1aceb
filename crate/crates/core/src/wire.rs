//! JSON payloads shared by devices, the ingestion server and viewers.

use serde::{Deserialize, Serialize};

use crate::signal::{AdcConfig, LeadState};

pub use crate::analytics::{Alert, AlertKind, BeatEstimate, QualityReport};

pub const API_PREFIX: &str = "/api/v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patient {
    pub patient_id: String,
    pub display_name: String,
    pub created_ts_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsertPatient {
    pub patient_id: String,
    #[serde(default)]
    pub display_name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Active,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub device_id: String,
    pub patient_id: String,
    pub sample_rate_hz: u32,
    pub adc: AdcConfig,
    pub state: SessionState,
    pub created_ts_us: u64,
    /// -1 until the first batch is stored.
    pub last_seq_accepted: i64,
}

impl Session {
    pub fn next_expected_seq(&self) -> u32 {
        (self.last_seq_accepted + 1) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub device_id: String,
    pub patient_id: String,
    pub sample_rate_hz: u32,
    #[serde(default)]
    pub adc: AdcConfig,
}

/// Unit of transmission and storage: `codes[i]` was sampled with lead
/// state `flags[i]`, at `start_ts_us + i * 1e6 / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub seq: u32,
    pub start_ts_us: u64,
    pub codes: Vec<u32>,
    pub flags: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchProblem {
    Empty,
    LengthMismatch { codes: usize, flags: usize },
    TooLong(usize),
    BadFlags(u8),
    CodeOutOfRange(u32),
}

impl std::fmt::Display for BatchProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BatchProblem::Empty => f.write_str("batch has no samples"),
            BatchProblem::LengthMismatch { codes, flags } => {
                write!(f, "{codes} codes but {flags} flags")
            }
            BatchProblem::TooLong(n) => write!(f, "{n} samples exceeds {}", u16::MAX),
            BatchProblem::BadFlags(b) => write!(f, "flag value {b} uses bits above bit1"),
            BatchProblem::CodeOutOfRange(_) => f.write_str("code out of range"),
        }
    }
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Structural checks plus `code < 2^bits`.
    pub fn check(&self, adc: &AdcConfig) -> Result<(), BatchProblem> {
        if self.codes.is_empty() {
            return Err(BatchProblem::Empty);
        }
        if self.codes.len() != self.flags.len() {
            return Err(BatchProblem::LengthMismatch {
                codes: self.codes.len(),
                flags: self.flags.len(),
            });
        }
        if self.codes.len() > u16::MAX as usize {
            return Err(BatchProblem::TooLong(self.codes.len()));
        }
        if let Some(&b) = self
            .flags
            .iter()
            .find(|&&b| LeadState::from_bits(b).is_err())
        {
            return Err(BatchProblem::BadFlags(b));
        }
        if let Some(&c) = self.codes.iter().find(|&&c| c >= adc.levels()) {
            return Err(BatchProblem::CodeOutOfRange(c));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestAck {
    pub accepted: bool,
    pub next_expected_seq: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl IngestAck {
    pub fn accepted(next_expected_seq: u32) -> Self {
        Self {
            accepted: true,
            next_expected_seq,
            reason: None,
        }
    }

    pub fn rejected(next_expected_seq: u32, reason: impl Into<String>) -> Self {
        Self {
            accepted: false,
            next_expected_seq,
            reason: Some(reason.into()),
        }
    }
}

/// One stored sample; serialized as `[ts_us, code, flags]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(u64, u16, u8)", into = "(u64, u16, u8)")]
pub struct StoredSample {
    pub ts_us: u64,
    pub code: u16,
    pub flags: u8,
}

impl From<(u64, u16, u8)> for StoredSample {
    fn from((ts_us, code, flags): (u64, u16, u8)) -> Self {
        Self { ts_us, code, flags }
    }
}

impl From<StoredSample> for (u64, u16, u8) {
    fn from(s: StoredSample) -> Self {
        (s.ts_us, s.code, s.flags)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesResponse {
    pub sample_rate_hz: u32,
    pub adc: AdcConfig,
    pub samples: Vec<StoredSample>,
    /// Set when the segment had a damaged tail; samples before it are still
    /// returned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Derived vitals over a window of stored samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vitals {
    pub beats: BeatEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<QualityReport>,
}

/// Event names used on the live stream.
pub mod event {
    pub const BATCH: &str = "batch";
    pub const ALERT: &str = "alert";
    pub const OVERFLOW: &str = "overflow";
    pub const CLOSED: &str = "closed";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverflowNotice {
    pub reason: String,
    /// Highest seq delivered to this subscriber before disconnection.
    pub last_delivered_seq: Option<u32>,
}
