//! HTTP and WebSocket endpoints.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use asyncmld::dst_store::DstState;
use asyncmld::orchestrator::{Session, TurnError, TurnTrace};
use asyncmld::scenario::DialoguePhase;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{broadcast, mpsc};

use crate::engine::{self, BackendDescriptor, CreateError, Engine, SessionRequest};
use crate::events::{StreamEvent, TurnEvents};

#[derive(Clone, Debug)]
pub struct ServerOptions {
    /// Wall seconds of simulated speech per virtual second; 0 disables pacing.
    pub speech_pace: f64,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self { speech_pace: 1.0 }
    }
}

/// Event log plus live fan-out for one session.
struct Hub {
    log: Vec<StreamEvent>,
    tx: broadcast::Sender<StreamEvent>,
}

impl Hub {
    fn publish(&mut self, ev: StreamEvent) {
        self.log.push(ev.clone());
        // no subscribers is fine
        let _ = self.tx.send(ev);
    }
}

struct SessionSlot {
    session: Arc<tokio::sync::Mutex<Session>>,
    hub: Arc<Mutex<Hub>>,
    pacer: mpsc::UnboundedSender<TurnEvents>,
    handle: SessionHandle,
}

#[derive(Clone, Debug, Serialize)]
pub struct SessionHandle {
    pub session_id: String,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub phase: DialoguePhase,
    pub backend_config: BackendDescriptor,
}

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    options: ServerOptions,
    sessions: Arc<RwLock<HashMap<String, Arc<SessionSlot>>>>,
}

impl AppState {
    pub fn new(engine: Engine, options: ServerOptions) -> Self {
        Self {
            engine: Arc::new(engine),
            options,
            sessions: Arc::default(),
        }
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    field: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            field: None,
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("no session `{id}`"))
    }
}

impl From<TurnError> for ApiError {
    fn from(e: TurnError) -> Self {
        let status = match &e {
            TurnError::Ended => StatusCode::CONFLICT,
            TurnError::EmptyUtterance => StatusCode::BAD_REQUEST,
            TurnError::Backend(_) | TurnError::EmptyReply => StatusCode::BAD_GATEWAY,
            TurnError::Dst(_) | TurnError::Config(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl From<CreateError> for ApiError {
    fn from(e: CreateError) -> Self {
        match e {
            CreateError::Field(f) => Self {
                status: StatusCode::BAD_REQUEST,
                message: f.message,
                field: Some(f.field),
            },
            CreateError::Backend(b) => Self {
                status: StatusCode::BAD_REQUEST,
                message: b.to_string(),
                field: Some("backend"),
            },
            CreateError::Turn(t) => t.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(f) = self.field {
            body["field"] = json!(f);
        }
        (self.status, Json(body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/utterances", post(post_utterance))
        .route("/api/sessions/{id}/trace", get(get_trace))
        .route("/api/sessions/{id}/state", get(get_state))
        .route("/api/sessions/{id}/stream", get(stream))
        .with_state(state)
}

fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

async fn pace(mut rx: mpsc::UnboundedReceiver<TurnEvents>, hub: Arc<Mutex<Hub>>, speech_pace: f64) {
    while let Some(batch) = rx.recv().await {
        {
            let mut hub = hub.lock().expect("hub poisoned");
            for ev in batch.leading {
                hub.publish(ev);
            }
        }
        if speech_pace > 0.0 {
            tokio::time::sleep(Duration::from_secs_f64(batch.speech.as_secs_f64() * speech_pace)).await;
        }
        hub.lock().expect("hub poisoned").publish(batch.finished);
    }
}

async fn create_session(
    State(state): State<AppState>,
    body: Option<Json<SessionRequest>>,
) -> Result<(StatusCode, Json<SessionHandle>), ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let id = uuid::Uuid::new_v4().to_string();
    let engine = state.engine.clone();
    let (session, backend_config) = {
        let id = id.clone();
        tokio::task::spawn_blocking(move || engine.create_session(&id, &req))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??
    };
    let handle = SessionHandle {
        session_id: id.clone(),
        created_at: now_millis(),
        phase: session.phase(),
        backend_config,
    };
    let (tx, _) = broadcast::channel(1024);
    let hub = Arc::new(Mutex::new(Hub { log: Vec::new(), tx }));
    let (pacer, rx) = mpsc::unbounded_channel();
    tokio::spawn(pace(rx, hub.clone(), state.options.speech_pace));
    let slot = SessionSlot {
        session: Arc::new(tokio::sync::Mutex::new(session)),
        hub,
        pacer,
        handle: handle.clone(),
    };
    state
        .sessions
        .write()
        .expect("session map poisoned")
        .insert(id, Arc::new(slot));
    tracing::info!(session = %handle.session_id, "session created");
    Ok((StatusCode::CREATED, Json(handle)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionHandle>, ApiError> {
    let slot = state.slot(&id)?;
    let mut handle = slot.handle.clone();
    handle.phase = slot.session.lock().await.phase();
    Ok(Json(handle))
}

#[derive(Debug, Deserialize)]
pub struct UtteranceRequest {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UtteranceReply {
    pub turn_id: u64,
    pub reply: String,
    pub phase: DialoguePhase,
    pub stale: bool,
    pub degraded: bool,
}

async fn post_utterance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<UtteranceRequest>,
) -> Result<Json<UtteranceReply>, ApiError> {
    let slot = state.slot(&id)?;
    let mut guard = slot.session.clone().lock_owned().await;
    if guard.phase() == DialoguePhase::End {
        return Err(TurnError::Ended.into());
    }
    let (guard, result) = tokio::task::spawn_blocking(move || {
        let result = engine::submit(&mut guard, &req.text);
        (guard, result)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let (outcome, events) = result?;
    // queued while the session is still locked, so turns never interleave
    let _ = slot.pacer.send(events);
    drop(guard);
    Ok(Json(UtteranceReply {
        turn_id: outcome.trace.turn_id,
        stale: outcome.stale(),
        reply: outcome.system.text,
        phase: outcome.phase_after,
        degraded: outcome.degraded,
    }))
}

async fn get_trace(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<TurnTrace>>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.session.lock().await;
    Ok(Json(session.traces().cloned().collect()))
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<DstState>, ApiError> {
    let slot = state.slot(&id)?;
    let session = slot.session.lock().await;
    let dst = session
        .latest_state()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(Json((*dst).clone()))
}

async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let slot = state.slot(&id)?;
    {
        let mut session = slot.session.lock().await;
        if let Some(events) = engine::open(&mut session) {
            let _ = slot.pacer.send(events);
        }
    }
    Ok(ws.on_upgrade(move |socket| forward(socket, slot)))
}

async fn forward(mut socket: WebSocket, slot: Arc<SessionSlot>) {
    let (backlog, mut rx) = {
        let hub = slot.hub.lock().expect("hub poisoned");
        (hub.log.clone(), hub.tx.subscribe())
    };
    for ev in backlog {
        if send(&mut socket, &ev).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            ev = rx.recv() => match ev {
                Ok(ev) => {
                    if send(&mut socket, &ev).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!(skipped = n, "stream client lagging; reconnect to replay");
                    return;
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn send(socket: &mut WebSocket, ev: &StreamEvent) -> Result<(), axum::Error> {
    let text = serde_json::to_string(ev).expect("events always serialize");
    socket.send(Message::Text(text.into())).await
}
