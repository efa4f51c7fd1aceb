//! Core building blocks for a hardware-free tele-ECG pipeline.
//!
//! - [`signal`]: synthetic PQRST generation, front-end noise and lead-off
//!   modeling, ADC quantization.
//! - [`store`]: append-only per-session segment files with CRC-protected
//!   records and crash recovery.
//! - [`analytics`]: lead-off alerting, signal quality and heart-rate
//!   estimation.
//! - [`wire`]: the JSON payloads exchanged between devices, the ingestion
//!   server and viewers.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iteration otherwise; see [`exec`].

pub mod analytics;
pub mod error;
pub mod exec;
pub mod signal;
pub mod store;
pub mod wire;

pub use error::ValidationError;
pub use exec::Execution;
