//! HTTP control plane: JSON endpoints over [`ControlPlane`] and a
//! server-sent-events feed of window summaries.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::Stream;
use netsonify::control::{Accepted, CloseReason, ControlError, ControlPlane, DEFAULT_SUBSCRIBER_BUFFER};
use netsonify::ConfigPatch;
use serde::Deserialize;
use serde_json::json;

#[derive(Clone)]
struct AppState {
    control: Arc<ControlPlane>,
    buffer: usize,
}

pub fn router(control: Arc<ControlPlane>) -> Router {
    router_with_buffer(control, DEFAULT_SUBSCRIBER_BUFFER)
}

/// `buffer` bounds how many summaries a stalled `/events` client may fall
/// behind before it is disconnected.
pub fn router_with_buffer(control: Arc<ControlPlane>, buffer: usize) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/config", get(get_config).put(put_config))
        .route("/gain/{rule_id}", put(put_gain))
        .route("/mute/{rule_id}", post(post_mute))
        .route("/sound/{rule_id}", put(put_sound))
        .route("/window_period", put(put_window_period))
        .route("/events", get(events))
        .with_state(AppState { control, buffer })
}

struct ApiError(ControlError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            ControlError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ControlError::Conflict { .. } => StatusCode::CONFLICT,
            ControlError::UnknownRule { .. } => StatusCode::NOT_FOUND,
        };
        (status, Json(&self.0)).into_response()
    }
}

type ApiResult = Result<Json<Accepted>, ApiError>;

async fn get_state(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.control.state())
}

async fn get_config(State(s): State<AppState>) -> impl IntoResponse {
    let (config, version) = s.control.config();
    Json(json!({ "version": version, "config": config }))
}

async fn put_config(State(s): State<AppState>, Json(patch): Json<ConfigPatch>) -> ApiResult {
    s.control.put_config(&patch).map(Json).map_err(ApiError)
}

#[derive(Deserialize)]
struct GainBody {
    gain: f64,
}

async fn put_gain(State(s): State<AppState>, Path(rule): Path<String>, Json(b): Json<GainBody>) -> ApiResult {
    s.control.set_gain(&rule, b.gain).map(Json).map_err(ApiError)
}

#[derive(Deserialize, Default)]
struct MuteBody {
    muted: Option<bool>,
}

/// Sets the mute state from the body, or toggles it when the body is empty.
async fn post_mute(State(s): State<AppState>, Path(rule): Path<String>, body: axum::body::Bytes) -> Response {
    let body: MuteBody = if body.is_empty() {
        MuteBody::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(b) => b,
            Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
        }
    };
    let result = match body.muted {
        Some(m) => s.control.set_muted(&rule, m).map(|a| (a, m)),
        None => s.control.toggle_mute(&rule),
    };
    match result {
        Ok((a, muted)) => {
            Json(json!({ "version": a.version, "activates_at_window": a.activates_at_window, "muted": muted }))
                .into_response()
        }
        Err(e) => ApiError(e).into_response(),
    }
}

#[derive(Deserialize)]
struct SoundBody {
    sound: String,
}

async fn put_sound(State(s): State<AppState>, Path(rule): Path<String>, Json(b): Json<SoundBody>) -> ApiResult {
    s.control.set_sound(&rule, &b.sound).map(Json).map_err(ApiError)
}

#[derive(Deserialize)]
struct PeriodBody {
    window_period_s: f64,
}

async fn put_window_period(State(s): State<AppState>, Json(b): Json<PeriodBody>) -> ApiResult {
    s.control.set_window_period(b.window_period_s).map(Json).map_err(ApiError)
}

/// One `window` event per finished window; a final `close` event carries
/// the reason the feed ended.
async fn events(State(s): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let sub = s.control.subscribe(s.buffer);
    let (tx, rx) = tokio::sync::mpsc::channel::<Event>(4);
    std::thread::spawn(move || loop {
        match sub.recv_timeout(Duration::from_millis(500)) {
            Ok(Some(summary)) => {
                let ev = Event::default().event("window").json_data(&*summary).expect("summary serializes");
                if tx.blocking_send(ev).is_err() {
                    return;
                }
            }
            Ok(None) => {
                if tx.is_closed() {
                    return;
                }
            }
            Err(reason) => {
                let _ = tx.blocking_send(close_event(reason));
                return;
            }
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move { rx.recv().await.map(|e| (Ok(e), rx)) });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

fn close_event(reason: CloseReason) -> Event {
    Event::default().event("close").data(json!({ "reason": reason.code() }).to_string())
}
