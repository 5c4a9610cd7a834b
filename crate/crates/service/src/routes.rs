//! HTTP endpoints. Every handler hands its work to a blocking thread,
//! since engine commands may call the provider synchronously.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::sync::broadcast::error::RecvError;

use jam_core::engine::{Amendment, EventPayload};
use jam_core::gateway::{AudioChunk, GatewayError};
use jam_core::GameEvent;

use crate::error::ApiError;
use crate::state::{AppState, ChallengeRequest, SpeechInput, SpeechRequest};

type AppRef = Arc<AppState>;

/// Longest a long-poll request waits for new events.
const MAX_WAIT_MS: u64 = 30_000;
const MAX_BODY_BYTES: usize = 32 * 1024 * 1024;

pub fn router(state: AppRef) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(view))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/speech", post(speech))
        .route("/sessions/{id}/challenge", post(challenge))
        .route("/sessions/{id}/appeal", post(appeal))
        .route("/sessions/{id}/summary", get(summary))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(e.to_string()))
}

async fn health(State(st): State<AppRef>) -> Json<crate::state::Health> {
    Json(st.health())
}

async fn create(State(st): State<AppRef>, body: Bytes) -> Result<Response, ApiError> {
    let value: serde_json::Value = if body.iter().all(u8::is_ascii_whitespace) {
        serde_json::Value::Null
    } else {
        parse(&body)?
    };
    let resp = blocking(move || st.create_session(value)).await?;
    Ok((axum::http::StatusCode::CREATED, Json(resp)).into_response())
}

async fn view(State(st): State<AppRef>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(blocking(move || st.view(&id)).await?).into_response())
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    from: Option<u64>,
    /// Long-poll: wait this long for new events when none are pending.
    wait_ms: Option<u64>,
}

fn wants_stream(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("text/event-stream"))
}

/// `from` wins; otherwise resume after the `Last-Event-ID` a reconnecting
/// client sends.
fn start_seq(q: &EventsQuery, headers: &HeaderMap) -> u64 {
    q.from.unwrap_or_else(|| {
        headers
            .get("last-event-id")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map_or(0, |s| s + 1)
    })
}

async fn events(
    State(st): State<AppRef>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let from = start_seq(&q, &headers);
    // Subscribe before reading the backlog so nothing falls between them.
    let mut rx = st.session(&id)?.subscribe();
    let page = {
        let (st, id) = (st.clone(), id.clone());
        blocking(move || st.events_since(&id, from)).await?
    };
    if wants_stream(&headers) {
        return Ok(Sse::new(event_stream(page.events, rx, page.next, page.ended))
            .keep_alive(KeepAlive::default())
            .into_response());
    }
    let wait = q.wait_ms.unwrap_or(0).min(MAX_WAIT_MS);
    if page.events.is_empty() && !page.ended && wait > 0 {
        let _ = tokio::time::timeout(Duration::from_millis(wait), rx.recv()).await;
        let page = blocking(move || st.events_since(&id, from)).await?;
        return Ok(Json(page).into_response());
    }
    Ok(Json(page).into_response())
}

fn sse_event(e: &GameEvent) -> Result<Event, Infallible> {
    let data = serde_json::to_string(e).expect("events serialize");
    Ok(Event::default().id(e.seq.to_string()).event(e.payload.name()).data(data))
}

/// The backlog, then live events in order. A subscriber that falls behind
/// or would see a gap is disconnected; it resumes with `Last-Event-ID`.
fn event_stream(
    backlog: Vec<GameEvent>,
    rx: tokio::sync::broadcast::Receiver<GameEvent>,
    next: u64,
    ended: bool,
) -> impl Stream<Item = Result<Event, Infallible>> {
    let head = stream::iter(backlog.iter().map(sse_event).collect::<Vec<_>>());
    let live = stream::unfold((rx, next, ended), |(mut rx, mut next, done)| async move {
        if done {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok(e) if e.seq < next => continue,
                Ok(e) if e.seq == next => {
                    next += 1;
                    let end = matches!(e.payload, EventPayload::GameEnded { .. });
                    return Some((sse_event(&e), (rx, next, end)));
                }
                Ok(_) | Err(RecvError::Lagged(_)) | Err(RecvError::Closed) => return None,
            }
        }
    });
    head.chain(live)
}

fn is_wav(headers: &HeaderMap) -> Option<bool> {
    let ct = headers.get(header::CONTENT_TYPE)?.to_str().ok()?.to_ascii_lowercase();
    if ct.starts_with("application/json") {
        return Some(false);
    }
    if ct.starts_with("audio/") {
        return Some(["audio/wav", "audio/x-wav", "audio/wave", "audio/vnd.wave"].iter().any(|w| ct.starts_with(w)));
    }
    None
}

async fn speech(
    State(st): State<AppRef>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let audio_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.to_ascii_lowercase().starts_with("audio/"));
    let input = match (is_wav(&headers), audio_type) {
        (Some(true), _) => SpeechInput::Audio(AudioChunk {
            id: headers
                .get("x-chunk-id")
                .and_then(|v| v.to_str().ok())
                .map(str::to_string),
            wav: body.to_vec(),
        }),
        (_, true) => {
            let ct = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).unwrap_or("");
            return Err(GatewayError::UnsupportedFormat(format!("{ct}; upload 16 kHz mono PCM WAV")).into());
        }
        _ => parse::<SpeechRequest>(&body)?.into_input(st.lexicons())?,
    };
    Ok(Json(blocking(move || st.speech(&id, input)).await?).into_response())
}

async fn challenge(State(st): State<AppRef>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let req: ChallengeRequest = parse(&body)?;
    Ok(Json(blocking(move || st.challenge(&id, &req)).await?).into_response())
}

async fn appeal(State(st): State<AppRef>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let amendment: Amendment = parse(&body)?;
    Ok(Json(blocking(move || st.appeal(&id, &amendment)).await?).into_response())
}

async fn summary(State(st): State<AppRef>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(blocking(move || st.summary(&id)).await?).into_response())
}
