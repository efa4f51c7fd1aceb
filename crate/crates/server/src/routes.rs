use std::convert::Infallible;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse, Redirect, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use telecg_core::wire::{
    event, CreateSession, Health, SampleBatch, SamplesResponse, UpsertPatient, API_PREFIX,
};
use tower_http::services::ServeDir;

use crate::error::ApiError;
use crate::hub::StreamEvent;
use crate::state::AppState;

const UI_PLACEHOLDER: &str = include_str!("placeholder.html");

/// Parse a JSON body, reporting syntax and shape errors alike as 422.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Invalid(format!("malformed body: {e}")))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(t)| t)
        .map_err(|e| ApiError::Invalid(e.body_text()))
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/patients", get(list_patients).post(upsert_patient))
        .route("/patients/{id}/sessions", get(list_sessions))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(close_session))
        .route("/sessions/{id}/batches", post(ingest))
        .route("/sessions/{id}/samples", get(samples))
        .route("/sessions/{id}/stream", get(stream))
        .route("/sessions/{id}/alerts", get(alerts))
        .route("/sessions/{id}/vitals", get(vitals))
        .route("/alerts/{id}/ack", post(ack_alert));

    let ui_dir = state
        .config()
        .ui_dir
        .clone()
        .filter(|d| d.join("index.html").is_file());
    let router = Router::new()
        .nest(API_PREFIX, api)
        .route("/", get(|| async { Redirect::temporary("/ui/") }))
        .route("/ui", get(|| async { Redirect::permanent("/ui/") }));
    let router = match ui_dir {
        Some(dir) => router.nest_service("/ui/", ServeDir::new(dir)),
        None => router.route("/ui/", get(|| async { Html(UI_PLACEHOLDER) })),
    };
    router.with_state(state)
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
    })
}

async fn list_patients(State(s): State<AppState>) -> Response {
    Json(s.list_patients()).into_response()
}

async fn upsert_patient(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: UpsertPatient = parse(&body)?;
    Ok(Json(s.upsert_patient(req)?).into_response())
}

async fn list_sessions(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(Json(s.list_sessions(&id)?).into_response())
}

async fn create_session(State(s): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse(&body)?;
    Ok((StatusCode::CREATED, Json(s.create_session(req).await?)).into_response())
}

async fn get_session(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(Json(s.session(&id)?).into_response())
}

async fn close_session(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(Json(s.close_session(&id).await?).into_response())
}

async fn ingest(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let batch: SampleBatch = parse(&body)?;
    let (status, ack) = s.ingest(&id, batch).await?;
    Ok((status, Json(ack)).into_response())
}

#[derive(Debug, Deserialize)]
struct RangeQuery {
    from_us: Option<u64>,
    to_us: Option<u64>,
}

async fn samples(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<RangeQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    let (session, read) = s
        .samples(&id, q.from_us.unwrap_or(0), q.to_us.unwrap_or(u64::MAX))
        .await?;
    Ok(Json(SamplesResponse {
        sample_rate_hz: session.sample_rate_hz,
        adc: session.adc,
        samples: read.samples,
        corruption: read.corruption.map(|c| c.to_string()),
    })
    .into_response())
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    from_seq: Option<u32>,
}

fn sse_event(ev: StreamEvent, session_id: &str) -> Event {
    let (name, data) = match &ev {
        StreamEvent::Batch(b) => (event::BATCH, serde_json::to_string(b)),
        StreamEvent::Alert(a) => (event::ALERT, serde_json::to_string(a)),
        StreamEvent::Overflow(o) => (event::OVERFLOW, serde_json::to_string(o)),
        StreamEvent::Closed => (
            event::CLOSED,
            serde_json::to_string(&serde_json::json!({ "session_id": session_id })),
        ),
    };
    let out = Event::default()
        .event(name)
        .data(data.unwrap_or_else(|_| "{}".into()));
    match ev {
        StreamEvent::Batch(b) => out.id(b.seq.to_string()),
        _ => out,
    }
}

async fn stream(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<StreamQuery>, QueryRejection>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let q = query(q)?;
    let events = s.subscribe(&id, q.from_seq).await?;
    let out = events.map(move |ev| Ok(sse_event(ev, &id)));
    Ok(Sse::new(out).keep_alive(KeepAlive::default()))
}

async fn alerts(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.alerts(&id)?).into_response())
}

async fn vitals(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.vitals(&id)?).into_response())
}

async fn ack_alert(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(Json(s.ack_alert(&id).await?).into_response())
}
