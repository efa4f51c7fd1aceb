//! Server state and the operations behind each endpoint, independent of
//! HTTP framing.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::http::StatusCode;
use futures::{Stream, StreamExt};
use parking_lot::{Mutex, RwLock};
use telecg_core::analytics::{AlertTransition, SessionAnalytics};
use telecg_core::store::{RangeRead, SegmentMeta, SegmentRecord, WaveformStore};
use telecg_core::wire::{
    Alert, BatchProblem, CreateSession, IngestAck, Patient, SampleBatch, Session, SessionState,
    UpsertPatient, Vitals,
};
use tracing::{debug, info, warn};

use crate::error::ApiError;
use crate::hub::{Hub, StreamEvent, DEFAULT_SUBSCRIBER_QUEUE};
use crate::registry::Registry;

pub const MIN_RATE_HZ: u32 = 50;
pub const MAX_RATE_HZ: u32 = 2000;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    /// Events buffered per stream subscriber before it is dropped.
    pub subscriber_queue: usize,
    /// Static viewer assets served under `/ui/`; a placeholder page is
    /// served when unset or missing.
    pub ui_dir: Option<PathBuf>,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            subscriber_queue: DEFAULT_SUBSCRIBER_QUEUE,
            ui_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("data directory {0}: {1}")]
    DataDir(PathBuf, std::io::Error),
    #[error("registry: {0}")]
    Registry(std::io::Error),
    #[error("store: {0}")]
    Store(#[from] telecg_core::store::StoreError),
}

pub(crate) fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

struct SessionHandle {
    /// Serializes writers (ingest, close, ack) for this session.
    writer: tokio::sync::Mutex<()>,
    view: RwLock<Session>,
    analytics: Mutex<SessionAnalytics>,
    hub: Hub,
}

struct Inner {
    cfg: ServerConfig,
    store: Arc<WaveformStore>,
    registry: Registry,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

/// Cheaply cloneable handle to the running server's state.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Open the data directory: recover segments, reload the registry and
    /// rebuild per-session analytics from stored samples.
    pub fn open(cfg: ServerConfig) -> Result<Self, StartupError> {
        std::fs::create_dir_all(&cfg.data_dir)
            .map_err(|e| StartupError::DataDir(cfg.data_dir.clone(), e))?;
        let registry =
            Registry::open(cfg.data_dir.join("registry.json")).map_err(StartupError::Registry)?;
        let (store, report) = WaveformStore::open(crate::segment_dir(&cfg.data_dir))?;
        for (id, seg) in &report.sessions {
            if seg.truncated_bytes > 0 {
                warn!(session = %id, bytes = seg.truncated_bytes, "truncated damaged segment tail");
            }
        }
        for (file, reason) in &report.unavailable {
            warn!(%file, %reason, "segment unavailable");
        }

        // Segments written before their registry entry (crash between the
        // two steps) are adopted from their header.
        let known: std::collections::HashSet<String> = registry
            .sessions()
            .into_iter()
            .map(|s| s.session_id)
            .collect();
        for id in report.sessions.keys().filter(|id| !known.contains(*id)) {
            let meta = store.meta(id)?;
            info!(session = %id, "adopting segment without registry entry");
            registry
                .ensure_patient(&meta.patient_id, now_us())
                .map_err(StartupError::Registry)?;
            registry
                .insert_session(Session {
                    session_id: meta.session_id,
                    device_id: meta.device_id,
                    patient_id: meta.patient_id,
                    sample_rate_hz: meta.sample_rate_hz,
                    adc: meta.adc,
                    state: SessionState::Active,
                    created_ts_us: now_us(),
                    last_seq_accepted: -1,
                })
                .map_err(StartupError::Registry)?;
        }

        let mut sessions = HashMap::new();
        for mut s in registry.sessions() {
            if !store.contains(&s.session_id) {
                warn!(session = %s.session_id, "no readable segment; session unavailable");
                continue;
            }
            let scan = store.scan(&s.session_id)?;
            s.last_seq_accepted = scan.last_seq().map_or(-1, i64::from);
            if s.state == SessionState::Closed {
                store.close(&s.session_id)?;
            }
            let mut analytics = SessionAnalytics::replay(
                s.session_id.clone(),
                s.sample_rate_hz,
                s.adc,
                &scan.all_samples(),
            );
            let acked: Vec<String> = analytics
                .alerts()
                .iter()
                .filter(|a| registry.is_acked(&a.alert_id))
                .map(|a| a.alert_id.clone())
                .collect();
            for id in acked {
                if let Some(a) = analytics.alert_mut(&id) {
                    a.acknowledged = true;
                }
            }
            debug!(session = %s.session_id, last_seq = s.last_seq_accepted, "session restored");
            sessions.insert(
                s.session_id.clone(),
                Arc::new(handle(s, analytics, cfg.subscriber_queue)),
            );
        }

        Ok(Self {
            inner: Arc::new(Inner {
                cfg,
                store: Arc::new(store),
                registry,
                sessions: RwLock::new(sessions),
            }),
        })
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.cfg
    }

    pub fn store(&self) -> &Arc<WaveformStore> {
        &self.inner.store
    }

    fn handle(&self, session_id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        if let Some(h) = self.inner.sessions.read().get(session_id) {
            return Ok(h.clone());
        }
        if self.inner.registry.session(session_id).is_some() {
            return Err(ApiError::Unavailable(format!(
                "session {session_id} storage is unavailable"
            )));
        }
        Err(ApiError::NotFound(format!("unknown session {session_id}")))
    }

    pub fn list_patients(&self) -> Vec<Patient> {
        self.inner.registry.patients()
    }

    pub fn upsert_patient(&self, req: UpsertPatient) -> Result<Patient, ApiError> {
        if req.patient_id.trim().is_empty() {
            return Err(ApiError::Invalid("patient_id must be nonempty".into()));
        }
        Ok(self
            .inner
            .registry
            .upsert_patient(&req.patient_id, &req.display_name, now_us())?)
    }

    /// Sessions of one patient, newest first.
    pub fn list_sessions(&self, patient_id: &str) -> Result<Vec<Session>, ApiError> {
        if self.inner.registry.patient(patient_id).is_none() {
            return Err(ApiError::NotFound(format!("unknown patient {patient_id}")));
        }
        let live = self.inner.sessions.read();
        Ok(self
            .inner
            .registry
            .sessions()
            .into_iter()
            .rev()
            .filter(|s| s.patient_id == patient_id)
            .map(|s| live.get(&s.session_id).map_or(s, |h| h.view.read().clone()))
            .collect())
    }

    pub fn session(&self, session_id: &str) -> Result<Session, ApiError> {
        Ok(self.handle(session_id)?.view.read().clone())
    }

    pub async fn create_session(&self, req: CreateSession) -> Result<Session, ApiError> {
        if req.device_id.trim().is_empty() {
            return Err(ApiError::Invalid("device_id must be nonempty".into()));
        }
        if !(MIN_RATE_HZ..=MAX_RATE_HZ).contains(&req.sample_rate_hz) {
            return Err(ApiError::Invalid(format!(
                "sample_rate_hz must be in [{MIN_RATE_HZ}, {MAX_RATE_HZ}]"
            )));
        }
        req.adc
            .validate()
            .map_err(|e| ApiError::Invalid(e.to_string()))?;
        if self.inner.registry.patient(&req.patient_id).is_none() {
            return Err(ApiError::NotFound(format!(
                "unknown patient {}",
                req.patient_id
            )));
        }
        let session = Session {
            session_id: format!("s{}", uuid::Uuid::new_v4().simple()),
            device_id: req.device_id,
            patient_id: req.patient_id,
            sample_rate_hz: req.sample_rate_hz,
            adc: req.adc,
            state: SessionState::Active,
            created_ts_us: now_us(),
            last_seq_accepted: -1,
        };
        let meta = SegmentMeta {
            session_id: session.session_id.clone(),
            device_id: session.device_id.clone(),
            patient_id: session.patient_id.clone(),
            sample_rate_hz: session.sample_rate_hz,
            adc: session.adc,
        };
        // segment first: a crash before the registry write is repaired on
        // startup by adopting the orphan segment
        let store = self.inner.store.clone();
        tokio::task::spawn_blocking(move || store.create(meta)).await??;
        let registry_entry = session.clone();
        let inner = self.inner.clone();
        tokio::task::spawn_blocking(move || inner.registry.insert_session(registry_entry))
            .await??;
        let analytics = SessionAnalytics::new(
            session.session_id.clone(),
            session.sample_rate_hz,
            session.adc,
        );
        self.inner.sessions.write().insert(
            session.session_id.clone(),
            Arc::new(handle(
                session.clone(),
                analytics,
                self.inner.cfg.subscriber_queue,
            )),
        );
        info!(session = %session.session_id, device = %session.device_id, "session created");
        Ok(session)
    }

    /// Accept, acknowledge or reject one batch. Always answers with an ack
    /// body; the status code distinguishes gap (409), malformed (422) and
    /// closed (410) from success.
    pub async fn ingest(
        &self,
        session_id: &str,
        batch: SampleBatch,
    ) -> Result<(StatusCode, IngestAck), ApiError> {
        let h = self.handle(session_id)?;
        let _writer = h.writer.lock().await;
        let (state, last, adc, rate) = {
            let v = h.view.read();
            (v.state, v.last_seq_accepted, v.adc, v.sample_rate_hz)
        };
        let next = (last + 1) as u32;
        if state == SessionState::Closed {
            return Ok((
                StatusCode::GONE,
                IngestAck::rejected(next, "session closed"),
            ));
        }
        if let Err(problem) = batch.check(&adc) {
            let reason = match problem {
                BatchProblem::CodeOutOfRange(_) => "code out of range".to_string(),
                other => other.to_string(),
            };
            return Ok((
                StatusCode::UNPROCESSABLE_ENTITY,
                IngestAck::rejected(next, reason),
            ));
        }
        if i64::from(batch.seq) <= last {
            debug!(session = %session_id, seq = batch.seq, "duplicate batch acknowledged");
            return Ok((StatusCode::OK, IngestAck::accepted(next)));
        }
        if batch.seq != next {
            return Ok((
                StatusCode::CONFLICT,
                IngestAck::rejected(next, format!("gap: expected seq {next}, got {}", batch.seq)),
            ));
        }

        let record = SegmentRecord::from_batch(&batch)?;
        let store = self.inner.store.clone();
        let id = session_id.to_string();
        let stored = batch.clone();
        tokio::task::spawn_blocking(move || store.append(&id, &stored)).await??;

        h.view.write().last_seq_accepted = i64::from(batch.seq);
        let samples: Vec<_> = record.samples(rate).collect();
        let transitions = h.analytics.lock().ingest(&samples);
        h.hub.publish(&StreamEvent::Batch(batch));
        for t in transitions {
            if let AlertTransition::Opened(a) = &t {
                info!(alert = %a.alert_id, kind = ?a.kind, "alert opened");
            }
            h.hub.publish(&StreamEvent::Alert(t.alert().clone()));
        }
        Ok((StatusCode::OK, IngestAck::accepted(next + 1)))
    }

    /// Samples with timestamps in `[from_us, to_us)`.
    pub async fn samples(
        &self,
        session_id: &str,
        from_us: u64,
        to_us: u64,
    ) -> Result<(Session, RangeRead), ApiError> {
        if from_us > to_us {
            return Err(ApiError::Invalid(format!(
                "inverted range: from_us {from_us} > to_us {to_us}"
            )));
        }
        let session = self.session(session_id)?;
        let store = self.inner.store.clone();
        let id = session_id.to_string();
        let read =
            tokio::task::spawn_blocking(move || store.read_range(&id, from_us, to_us)).await??;
        Ok((session, read))
    }

    /// Live events for a session. With `from_seq`, stored batches from that
    /// seq are replayed first; the backlog and the live tail are taken under
    /// the session's writer lock so nothing is missed or repeated.
    pub async fn subscribe(
        &self,
        session_id: &str,
        from_seq: Option<u32>,
    ) -> Result<impl Stream<Item = StreamEvent> + Send + 'static, ApiError> {
        let h = self.handle(session_id)?;
        let _writer = h.writer.lock().await;
        let backlog: Vec<StreamEvent> = match from_seq {
            Some(from) => {
                let store = self.inner.store.clone();
                let id = session_id.to_string();
                tokio::task::spawn_blocking(move || store.records_from(&id, from))
                    .await??
                    .iter()
                    .map(|r| StreamEvent::Batch(r.to_batch()))
                    .collect()
            }
            None => Vec::new(),
        };
        let closed = h.view.read().state == SessionState::Closed;
        let live = if closed {
            futures::stream::iter(vec![StreamEvent::Closed]).boxed()
        } else {
            h.hub.subscribe().into_stream().boxed()
        };
        Ok(futures::stream::iter(backlog).chain(live))
    }

    pub fn alerts(&self, session_id: &str) -> Result<Vec<Alert>, ApiError> {
        Ok(self.handle(session_id)?.analytics.lock().alerts().to_vec())
    }

    pub fn vitals(&self, session_id: &str) -> Result<Vitals, ApiError> {
        let h = self.handle(session_id)?;
        let analytics = h.analytics.lock();
        Ok(analytics.vitals())
    }

    /// Mark an alert acknowledged. Idempotent.
    pub async fn ack_alert(&self, alert_id: &str) -> Result<Alert, ApiError> {
        let not_found = || ApiError::NotFound(format!("unknown alert {alert_id}"));
        let (session_id, _) = alert_id.rsplit_once("-a").ok_or_else(not_found)?;
        let h = self.handle(session_id).map_err(|_| not_found())?;
        let _writer = h.writer.lock().await;
        if h.analytics.lock().alert_mut(alert_id).is_none() {
            return Err(not_found());
        }
        let inner = self.inner.clone();
        let id = alert_id.to_string();
        tokio::task::spawn_blocking(move || inner.registry.ack_alert(&id)).await??;
        let alert = {
            let mut a = h.analytics.lock();
            let alert = a.alert_mut(alert_id).ok_or_else(not_found)?;
            let newly = !alert.acknowledged;
            alert.acknowledged = true;
            (alert.clone(), newly)
        };
        if alert.1 {
            h.hub.publish(&StreamEvent::Alert(alert.0.clone()));
        }
        Ok(alert.0)
    }

    /// Close a session: the segment refuses further appends, streams end.
    /// Closing again is a successful no-op.
    pub async fn close_session(&self, session_id: &str) -> Result<Session, ApiError> {
        let h = self.handle(session_id)?;
        let _writer = h.writer.lock().await;
        let current = h.view.read().clone();
        if current.state == SessionState::Closed {
            return Ok(current);
        }
        let inner = self.inner.clone();
        let id = session_id.to_string();
        tokio::task::spawn_blocking(move || -> Result<(), ApiError> {
            inner.store.close(&id)?;
            inner.registry.set_state(&id, SessionState::Closed)?;
            Ok(())
        })
        .await??;
        h.view.write().state = SessionState::Closed;
        h.hub.close_all(true);
        info!(session = %session_id, "session closed");
        let closed = h.view.read().clone();
        Ok(closed)
    }

    /// End every live stream without closing sessions (server shutdown).
    pub fn disconnect_streams(&self) {
        for h in self.inner.sessions.read().values() {
            h.hub.close_all(false);
        }
    }
}

fn handle(session: Session, analytics: SessionAnalytics, queue: usize) -> SessionHandle {
    SessionHandle {
        writer: tokio::sync::Mutex::new(()),
        view: RwLock::new(session),
        analytics: Mutex::new(analytics),
        hub: Hub::new(queue),
    }
}
