use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::task::JoinSet;
use tracing::{debug, info, warn};

use telecg_core::wire::{CreateSession, SampleBatch, Session};
use telecg_core::ValidationError;

use crate::backoff::backoff_delay;
use crate::buffer::BatchBuffer;
use crate::config::DeviceConfig;
use crate::source::Source;
use crate::transport::{Transport, TransportError};

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("session creation failed: {0}")]
    SessionRejected(TransportError),
    #[error("server refused batch: {0}")]
    BatchRejected(TransportError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransmitReport {
    pub device_id: String,
    /// Sessions used, in order. More than one only after a gap forced a
    /// rollover (see [`run_device`]).
    pub sessions: Vec<String>,
    pub batches_sent: u64,
    pub batches_dropped: u64,
    /// Still buffered when the drain timeout expired.
    pub batches_unsent: u64,
    pub samples_produced: u64,
    pub samples_sent: u64,
    pub retries: u64,
    pub duration_s: f64,
}

impl TransmitReport {
    pub fn is_lossless(&self) -> bool {
        self.batches_dropped == 0 && self.batches_unsent == 0
    }
}

fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

struct Link<'a, T: Transport + ?Sized> {
    transport: &'a T,
    cfg: &'a DeviceConfig,
    session: Session,
    /// Seq numbers in the buffer are relative to this base once a rollover
    /// has happened.
    seq_base: u32,
    attempt: u32,
    report: TransmitReport,
}

enum Flush {
    Drained,
    Backoff,
}

impl<'a, T: Transport + ?Sized> Link<'a, T> {
    async fn open(transport: &'a T, cfg: &'a DeviceConfig) -> Result<Session, DeviceError> {
        let req = CreateSession {
            device_id: cfg.device_id.clone(),
            patient_id: cfg.patient_id.clone(),
            sample_rate_hz: cfg.sample_rate_hz,
            adc: cfg.adc,
        };
        let mut attempt = 0;
        loop {
            let result = match transport.ensure_patient(&cfg.patient_id).await {
                Ok(()) => transport.create_session(&req).await,
                Err(e) => Err(e),
            };
            match result {
                Ok(s) => return Ok(s),
                Err(e) if e.is_retryable() && attempt + 1 < cfg.connect_attempts => {
                    let wait = backoff_delay(attempt, cfg.max_backoff_ms, &mut rand::rng());
                    warn!(device = %cfg.device_id, error = %e, ?wait, "session open failed, retrying");
                    tokio::time::sleep(wait).await;
                    attempt += 1;
                }
                Err(e) => return Err(DeviceError::SessionRejected(e)),
            }
        }
    }

    /// Send buffered batches in order until empty or the link fails.
    async fn flush(&mut self, buffer: &mut BatchBuffer) -> Result<Flush, DeviceError> {
        while let Some(front) = buffer.front() {
            let mut batch = front.clone();
            batch.seq = front.seq - self.seq_base;
            match self
                .transport
                .send_batch(&self.session.session_id, &batch)
                .await
            {
                Ok(ack) if ack.accepted => {
                    let b = buffer.pop().unwrap();
                    self.report.batches_sent += 1;
                    self.report.samples_sent += b.len() as u64;
                    self.attempt = 0;
                }
                Ok(ack) if ack.next_expected_seq > batch.seq => {
                    // server already holds it (an earlier ack was lost)
                    let b = buffer.pop().unwrap();
                    self.report.batches_sent += 1;
                    self.report.samples_sent += b.len() as u64;
                    self.attempt = 0;
                }
                Ok(ack) => {
                    // The server wants seqs this device evicted; they can never
                    // arrive, so continue in a fresh session.
                    warn!(
                        device = %self.cfg.device_id,
                        expected = ack.next_expected_seq,
                        have = batch.seq,
                        "unrecoverable gap after buffer overflow, rolling over session"
                    );
                    self.session = Link::open(self.transport, self.cfg).await?;
                    self.report.sessions.push(self.session.session_id.clone());
                    self.seq_base = front.seq;
                }
                Err(e) if e.is_retryable() => {
                    debug!(device = %self.cfg.device_id, error = %e, "send failed");
                    self.report.retries += 1;
                    return Ok(Flush::Backoff);
                }
                Err(e) => return Err(DeviceError::BatchRejected(e)),
            }
        }
        Ok(Flush::Drained)
    }

    fn next_backoff_us(&mut self) -> u64 {
        let d = backoff_delay(self.attempt, self.cfg.max_backoff_ms, &mut rand::rng());
        self.attempt = self.attempt.saturating_add(1);
        d.as_micros() as u64
    }
}

/// Stream `source` for `duration_s` (synthetic sources) or its full length
/// (recordings).
///
/// Samples are produced on a virtual clock: batch `k` becomes ready once its
/// last sample has been acquired. Failed sends are retried with exponential
/// backoff measured on the same clock while later batches keep accumulating
/// in a drop-oldest ring buffer. Retransmissions keep their original seq and
/// timestamps. If the server reports a gap the device can no longer fill
/// (the batches were evicted), the device opens a new session and carries on
/// there. After the last batch, sending continues in real time until the
/// buffer drains or `drain_timeout` expires.
pub async fn run_device<T: Transport + ?Sized>(
    cfg: &DeviceConfig,
    source: &Source,
    transport: &T,
    duration_s: f64,
) -> Result<TransmitReport, DeviceError> {
    cfg.validate()?;
    let started = Instant::now();
    let plan = source.plan(cfg.sample_rate_hz, cfg.batch_size, duration_s)?;
    let session = Link::open(transport, cfg).await?;
    let epoch_us = cfg.epoch_us.unwrap_or_else(now_us);
    info!(device = %cfg.device_id, session = %session.session_id, batches = plan.batches, "streaming");

    let mut link = Link {
        transport,
        cfg,
        report: TransmitReport {
            device_id: cfg.device_id.clone(),
            sessions: vec![session.session_id.clone()],
            samples_produced: plan.total_samples,
            ..Default::default()
        },
        session,
        seq_base: 0,
        attempt: 0,
    };
    let mut buffer = BatchBuffer::new(cfg.buffer_capacity);
    let mut retry_at_us = 0u64;

    for k in 0..plan.batches {
        let (mut batch, ready_us): (SampleBatch, u64) = source.batch(
            k,
            &plan,
            cfg.sample_rate_hz,
            cfg.batch_size,
            &cfg.adc,
            epoch_us,
        );
        batch.seq = k as u32;
        if cfg.realtime {
            let due = started + Duration::from_micros(ready_us);
            tokio::time::sleep_until(due.into()).await;
        }
        let dropped = buffer.push(batch);
        if dropped > 0 {
            warn!(device = %cfg.device_id, dropped, "buffer overflow, oldest batches dropped");
            link.report.batches_dropped += dropped as u64;
        }
        if ready_us >= retry_at_us {
            if let Flush::Backoff = link.flush(&mut buffer).await? {
                retry_at_us = ready_us + link.next_backoff_us();
            }
        }
    }

    // backoff restarts on the wall clock for the drain phase
    link.attempt = 0;
    let deadline = Instant::now() + cfg.drain_timeout;
    while !buffer.is_empty() {
        if let Flush::Drained = link.flush(&mut buffer).await? {
            break;
        }
        let wait = Duration::from_micros(link.next_backoff_us());
        if Instant::now() + wait > deadline {
            // one last try right at the deadline
            tokio::time::sleep_until(deadline.into()).await;
            link.flush(&mut buffer).await?;
            break;
        }
        tokio::time::sleep(wait).await;
    }

    link.report.batches_unsent = buffer.len() as u64;
    link.report.duration_s = started.elapsed().as_secs_f64();
    info!(
        device = %cfg.device_id,
        sent = link.report.batches_sent,
        dropped = link.report.batches_dropped,
        unsent = link.report.batches_unsent,
        "device finished"
    );
    Ok(link.report)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FleetReport {
    pub devices: Vec<TransmitReport>,
    pub failures: Vec<String>,
    pub batches_sent: u64,
    pub batches_dropped: u64,
    pub batches_unsent: u64,
    pub duration_s: f64,
}

impl FleetReport {
    pub fn is_lossless(&self) -> bool {
        self.failures.is_empty() && self.batches_dropped == 0 && self.batches_unsent == 0
    }
}

/// Run independent devices concurrently; each gets its own transport.
pub async fn run_fleet<T>(
    devices: Vec<(DeviceConfig, Source)>,
    make_transport: impl Fn(&DeviceConfig) -> T,
    duration_s: f64,
) -> FleetReport
where
    T: Transport + 'static,
{
    let started = Instant::now();
    let mut set = JoinSet::new();
    for (i, (cfg, source)) in devices.into_iter().enumerate() {
        let transport = make_transport(&cfg);
        set.spawn(async move {
            let r = run_device(&cfg, &source, &transport, duration_s).await;
            (i, cfg.device_id, r)
        });
    }
    let mut results = Vec::new();
    let mut report = FleetReport::default();
    while let Some(joined) = set.join_next().await {
        match joined {
            Ok((i, _, Ok(r))) => results.push((i, r)),
            Ok((_, id, Err(e))) => report.failures.push(format!("{id}: {e}")),
            Err(e) => report.failures.push(format!("task: {e}")),
        }
    }
    results.sort_by_key(|(i, _)| *i);
    for (_, r) in results {
        report.batches_sent += r.batches_sent;
        report.batches_dropped += r.batches_dropped;
        report.batches_unsent += r.batches_unsent;
        report.devices.push(r);
    }
    report.duration_s = started.elapsed().as_secs_f64();
    report
}

#[cfg(test)]
mod tests;
