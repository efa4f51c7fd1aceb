//! Patient and session metadata, persisted as one JSON document that is
//! rewritten atomically (temp file, fsync, rename) on every change.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use telecg_core::wire::{Patient, Session, SessionState};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Document {
    patients: BTreeMap<String, Patient>,
    /// Creation order; newest last.
    sessions: Vec<Session>,
    #[serde(default)]
    acked_alerts: BTreeSet<String>,
}

pub struct Registry {
    path: PathBuf,
    doc: RwLock<Document>,
}

impl Registry {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let doc = match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Document::default(),
            Err(e) => return Err(e),
        };
        Ok(Self {
            path,
            doc: RwLock::new(doc),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Apply `f` to a copy of the document, persist it, then publish it.
    /// The write lock is held throughout so readers never see unsaved state.
    fn update<R>(&self, f: impl FnOnce(&mut Document) -> R) -> io::Result<R> {
        let mut guard = self.doc.write();
        let mut next = guard.clone();
        let out = f(&mut next);
        write_atomic(&self.path, &serde_json::to_vec_pretty(&next)?)?;
        *guard = next;
        Ok(out)
    }

    pub fn patients(&self) -> Vec<Patient> {
        self.doc.read().patients.values().cloned().collect()
    }

    pub fn patient(&self, patient_id: &str) -> Option<Patient> {
        self.doc.read().patients.get(patient_id).cloned()
    }

    /// Insert or rename a patient; the creation time of an existing record
    /// is kept.
    pub fn upsert_patient(
        &self,
        patient_id: &str,
        display_name: &str,
        now_us: u64,
    ) -> io::Result<Patient> {
        self.update(|d| {
            let p = d
                .patients
                .entry(patient_id.to_string())
                .or_insert_with(|| Patient {
                    patient_id: patient_id.to_string(),
                    display_name: String::new(),
                    created_ts_us: now_us,
                });
            p.display_name = display_name.to_string();
            p.clone()
        })
    }

    /// Sessions in creation order.
    pub fn sessions(&self) -> Vec<Session> {
        self.doc.read().sessions.clone()
    }

    pub fn session(&self, session_id: &str) -> Option<Session> {
        self.doc
            .read()
            .sessions
            .iter()
            .find(|s| s.session_id == session_id)
            .cloned()
    }

    pub fn insert_session(&self, session: Session) -> io::Result<()> {
        self.update(|d| d.sessions.push(session))
    }

    /// Register a patient only if it is missing.
    pub fn ensure_patient(&self, patient_id: &str, now_us: u64) -> io::Result<()> {
        if self.patient(patient_id).is_some() {
            return Ok(());
        }
        self.upsert_patient(patient_id, patient_id, now_us)
            .map(|_| ())
    }

    pub fn set_state(&self, session_id: &str, state: SessionState) -> io::Result<()> {
        self.update(|d| {
            if let Some(s) = d.sessions.iter_mut().find(|s| s.session_id == session_id) {
                s.state = state;
            }
        })
    }

    pub fn is_acked(&self, alert_id: &str) -> bool {
        self.doc.read().acked_alerts.contains(alert_id)
    }

    pub fn ack_alert(&self, alert_id: &str) -> io::Result<()> {
        if self.is_acked(alert_id) {
            return Ok(());
        }
        self.update(|d| {
            d.acked_alerts.insert(alert_id.to_string());
        })
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        if let Ok(d) = File::open(dir) {
            let _ = d.sync_all();
        }
    }
    Ok(())
}
