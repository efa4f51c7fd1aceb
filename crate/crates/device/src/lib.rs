//! Simulated patient-side unit: an AD8232 front-end sampled by an ESP32,
//! batched and pushed to the ingestion server over HTTP.
//!
//! The device runs on a virtual clock derived from the sample index, so a
//! ten-minute recording can be streamed in well under a second. Realtime
//! pacing is opt-in via [`DeviceConfig::realtime`].

mod backoff;
mod buffer;
mod client;
mod config;
mod run;
mod source;
mod transport;

pub use backoff::{backoff_base_ms, backoff_delay, BACKOFF_INITIAL_MS};
pub use buffer::BatchBuffer;
pub use client::{ApiClient, MessageStream, StreamMessage};
pub use config::{DeviceConfig, DEFAULT_BATCH_SIZE, DEFAULT_RATE_HZ};
pub use run::{run_device, run_fleet, DeviceError, FleetReport, TransmitReport};
pub use source::{build_batch, PendingSample, RecordedBatch, Source};
pub use transport::{Transport, TransportError};
