use async_trait::async_trait;
use thiserror::Error;

use telecg_core::wire::{CreateSession, IngestAck, SampleBatch, Session};

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    /// Network down, timeout or a 5xx: worth retrying later.
    #[error("server unavailable: {0}")]
    Unavailable(String),
    /// The server understood and refused the request.
    #[error("rejected ({status}): {message}")]
    Rejected { status: u16, message: String },
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Unavailable(_))
    }
}

/// The device's view of the ingestion server. A gap rejection (HTTP 409)
/// is a normal `Ok` ack with `accepted == false`.
#[async_trait]
pub trait Transport: Send + Sync {
    /// Make sure the patient record exists before opening a session.
    async fn ensure_patient(&self, _patient_id: &str) -> Result<(), TransportError> {
        Ok(())
    }

    async fn create_session(&self, req: &CreateSession) -> Result<Session, TransportError>;

    async fn send_batch(
        &self,
        session_id: &str,
        batch: &SampleBatch,
    ) -> Result<IngestAck, TransportError>;
}

#[async_trait]
impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    async fn ensure_patient(&self, patient_id: &str) -> Result<(), TransportError> {
        (**self).ensure_patient(patient_id).await
    }

    async fn create_session(&self, req: &CreateSession) -> Result<Session, TransportError> {
        (**self).create_session(req).await
    }

    async fn send_batch(
        &self,
        session_id: &str,
        batch: &SampleBatch,
    ) -> Result<IngestAck, TransportError> {
        (**self).send_batch(session_id, batch).await
    }
}
