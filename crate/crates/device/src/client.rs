use std::time::Duration;

use async_trait::async_trait;
use eventsource_stream::Eventsource;
use futures_util::stream::{BoxStream, StreamExt};
use reqwest::{Client, Response, StatusCode};
use serde::de::DeserializeOwned;

use telecg_core::wire::{
    Alert, CreateSession, Health, IngestAck, Patient, SampleBatch, SamplesResponse, Session,
    UpsertPatient, Vitals, API_PREFIX,
};

use crate::transport::{Transport, TransportError};

/// Thin typed client over the ingestion server's HTTP API.
#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    http: Client,
    /// No overall timeout: live streams stay open indefinitely.
    streaming: Client,
}

/// One server-sent event from a session stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamMessage {
    pub event: String,
    pub id: Option<String>,
    pub data: String,
}

impl StreamMessage {
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, TransportError> {
        serde_json::from_str(&self.data)
            .map_err(|e| TransportError::Unavailable(format!("bad {} event: {e}", self.event)))
    }
}

pub type MessageStream = BoxStream<'static, Result<StreamMessage, TransportError>>;

fn unavailable(e: reqwest::Error) -> TransportError {
    TransportError::Unavailable(e.to_string())
}

async fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, TransportError> {
    let status = resp.status();
    if status.is_server_error() {
        let body = resp.text().await.unwrap_or_default();
        return Err(TransportError::Unavailable(format!("{status}: {body}")));
    }
    if !status.is_success() {
        let body = resp.text().await.unwrap_or_default();
        return Err(TransportError::Rejected {
            status: status.as_u16(),
            message: body,
        });
    }
    resp.json().await.map_err(unavailable)
}

impl ApiClient {
    pub fn new(base_url: &str) -> Self {
        let http = Client::builder()
            .timeout(Duration::from_secs(10))
            .connect_timeout(Duration::from_secs(2))
            .build()
            .expect("http client");
        let streaming = Client::builder()
            .connect_timeout(Duration::from_secs(2))
            .build()
            .expect("http client");
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            http,
            streaming,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{API_PREFIX}{path}", self.base)
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub async fn health(&self) -> Result<Health, TransportError> {
        decode(
            self.http
                .get(self.url("/health"))
                .send()
                .await
                .map_err(unavailable)?,
        )
        .await
    }

    pub async fn upsert_patient(&self, p: &UpsertPatient) -> Result<Patient, TransportError> {
        let resp = self.http.post(self.url("/patients")).json(p).send().await;
        decode(resp.map_err(unavailable)?).await
    }

    pub async fn list_patients(&self) -> Result<Vec<Patient>, TransportError> {
        decode(
            self.http
                .get(self.url("/patients"))
                .send()
                .await
                .map_err(unavailable)?,
        )
        .await
    }

    pub async fn list_sessions(&self, patient_id: &str) -> Result<Vec<Session>, TransportError> {
        let resp = self
            .http
            .get(self.url(&format!("/patients/{patient_id}/sessions")))
            .send()
            .await;
        decode(resp.map_err(unavailable)?).await
    }

    pub async fn session(&self, session_id: &str) -> Result<Session, TransportError> {
        let resp = self
            .http
            .get(self.url(&format!("/sessions/{session_id}")))
            .send()
            .await;
        decode(resp.map_err(unavailable)?).await
    }

    pub async fn samples(
        &self,
        session_id: &str,
        from_us: Option<u64>,
        to_us: Option<u64>,
    ) -> Result<SamplesResponse, TransportError> {
        let mut query = Vec::new();
        if let Some(f) = from_us {
            query.push(("from_us", f));
        }
        if let Some(t) = to_us {
            query.push(("to_us", t));
        }
        let resp = self
            .http
            .get(self.url(&format!("/sessions/{session_id}/samples")))
            .query(&query)
            .send()
            .await;
        decode(resp.map_err(unavailable)?).await
    }

    pub async fn alerts(&self, session_id: &str) -> Result<Vec<Alert>, TransportError> {
        let resp = self
            .http
            .get(self.url(&format!("/sessions/{session_id}/alerts")))
            .send()
            .await;
        decode(resp.map_err(unavailable)?).await
    }

    pub async fn vitals(&self, session_id: &str) -> Result<Vitals, TransportError> {
        let resp = self
            .http
            .get(self.url(&format!("/sessions/{session_id}/vitals")))
            .send()
            .await;
        decode(resp.map_err(unavailable)?).await
    }

    pub async fn ack_alert(&self, alert_id: &str) -> Result<Alert, TransportError> {
        let resp = self
            .http
            .post(self.url(&format!("/alerts/{alert_id}/ack")))
            .send()
            .await;
        decode(resp.map_err(unavailable)?).await
    }

    /// Subscribe to a session's live events, optionally replaying stored
    /// batches from `from_seq`. Keep-alive comments are skipped.
    pub async fn stream(
        &self,
        session_id: &str,
        from_seq: Option<u32>,
    ) -> Result<MessageStream, TransportError> {
        let mut req = self
            .streaming
            .get(self.url(&format!("/sessions/{session_id}/stream")));
        if let Some(seq) = from_seq {
            req = req.query(&[("from_seq", seq)]);
        }
        let resp = req.send().await.map_err(unavailable)?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(if status.is_server_error() {
                TransportError::Unavailable(format!("{status}: {body}"))
            } else {
                TransportError::Rejected {
                    status: status.as_u16(),
                    message: body,
                }
            });
        }
        Ok(resp
            .bytes_stream()
            .eventsource()
            .map(|r| {
                r.map(|e| StreamMessage {
                    event: e.event,
                    id: (!e.id.is_empty()).then_some(e.id),
                    data: e.data,
                })
                .map_err(|e| TransportError::Unavailable(e.to_string()))
            })
            .boxed())
    }

    pub async fn close_session(&self, session_id: &str) -> Result<Session, TransportError> {
        let resp = self
            .http
            .delete(self.url(&format!("/sessions/{session_id}")))
            .send()
            .await;
        decode(resp.map_err(unavailable)?).await
    }
}

#[async_trait]
impl Transport for ApiClient {
    async fn ensure_patient(&self, patient_id: &str) -> Result<(), TransportError> {
        self.upsert_patient(&UpsertPatient {
            patient_id: patient_id.to_string(),
            display_name: patient_id.to_string(),
        })
        .await
        .map(|_| ())
    }

    async fn create_session(&self, req: &CreateSession) -> Result<Session, TransportError> {
        let resp = self.http.post(self.url("/sessions")).json(req).send().await;
        decode(resp.map_err(unavailable)?).await
    }

    async fn send_batch(
        &self,
        session_id: &str,
        batch: &SampleBatch,
    ) -> Result<IngestAck, TransportError> {
        let resp = self
            .http
            .post(self.url(&format!("/sessions/{session_id}/batches")))
            .json(batch)
            .send()
            .await
            .map_err(unavailable)?;
        if resp.status() == StatusCode::CONFLICT {
            // gap: the body still carries next_expected_seq
            return resp.json().await.map_err(unavailable);
        }
        decode(resp).await
    }
}
