//! Session factory and turn driver shared by the HTTP server and the REPL.

use std::sync::Arc;

use asyncmld::dst_store::DstStore;
use asyncmld::orchestrator::{
    EngineConfig, PipelineMode, Session, SessionDeps, SpeechTimingModel, TurnError, TurnOutcome,
};
use asyncmld::rtdb::SpotCatalog;
use asyncmld::scenario::MockRouteProvider;
use asyncmld::sim_harness::LatencyConfig;
use serde::{Deserialize, Serialize};

use crate::backends::{build_backends, BackendKind, BackendSetupError, BackendSources};
use crate::events::{opening_events, turn_events, TurnEvents};

#[derive(Clone)]
pub struct Engine {
    pub catalog: Arc<SpotCatalog>,
    pub store: Arc<DstStore>,
    pub backend: BackendKind,
    pub sources: BackendSources,
    pub mode: PipelineMode,
    pub latency: LatencyConfig,
    pub timing: SpeechTimingModel,
    pub seed: u64,
}

impl Engine {
    pub fn new(catalog: SpotCatalog) -> Self {
        Self {
            catalog: Arc::new(catalog),
            store: Arc::new(DstStore::new()),
            backend: BackendKind::Mock,
            sources: BackendSources::default(),
            mode: PipelineMode::Async,
            latency: LatencyConfig::default(),
            timing: SpeechTimingModel::default(),
            seed: 0,
        }
    }
}

/// Per-session overrides, as posted to `POST /api/sessions`.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRequest {
    pub backend: Option<String>,
    pub mode: Option<String>,
    pub latency: Option<LatencyConfig>,
    pub timing: Option<SpeechTimingModel>,
    pub seed: Option<u64>,
}

/// A request field that failed validation.
#[derive(Debug, thiserror::Error)]
#[error("{field}: {message}")]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CreateError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Backend(#[from] BackendSetupError),
    #[error(transparent)]
    Turn(#[from] TurnError),
}

/// What a session was built with.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BackendDescriptor {
    pub backend: BackendKind,
    pub mode: PipelineMode,
}

impl Engine {
    pub fn create_session(&self, id: &str, req: &SessionRequest) -> Result<(Session, BackendDescriptor), CreateError> {
        let backend = match &req.backend {
            None => self.backend,
            Some(name) => BackendKind::parse(name).ok_or_else(|| FieldError {
                field: "backend",
                message: format!(
                    "unknown backend `{name}`; expected one of {}",
                    BackendKind::NAMES.join(", ")
                ),
            })?,
        };
        let mode = match req.mode.as_deref() {
            None => self.mode,
            Some("async") => PipelineMode::Async,
            Some("sync") => PipelineMode::Sync,
            Some(other) => {
                return Err(FieldError {
                    field: "mode",
                    message: format!("unknown mode `{other}`; expected async or sync"),
                }
                .into())
            }
        };
        let latency = req.latency.unwrap_or(self.latency);
        let seed = req.seed.unwrap_or(self.seed);
        let plan = latency.plan(seed).map_err(|e| FieldError {
            field: "latency",
            message: e.to_string(),
        })?;
        let timing = req.timing.unwrap_or(self.timing);
        timing.validate().map_err(|message| FieldError {
            field: "timing",
            message,
        })?;
        let pair = build_backends(backend, &self.sources, &latency, seed)?;
        let deps = SessionDeps {
            catalog: self.catalog.clone(),
            store: self.store.clone(),
            responder: pair.responder,
            understander: pair.understander,
            routes: Arc::new(MockRouteProvider),
        };
        let config = EngineConfig {
            mode,
            timing,
            search_latency: plan.search,
            ..EngineConfig::default()
        };
        let session = Session::new(id, deps, config)?;
        Ok((session, BackendDescriptor { backend, mode }))
    }
}

/// Speaks the opening statement if the session has not started yet.
pub fn open(session: &mut Session) -> Option<TurnEvents> {
    let at = session.now();
    let text = session.open()?;
    let speech = session.config().timing.speech_duration(&text);
    Some(opening_events(&text, at, speech))
}

/// Runs one turn and renders its stream events.
pub fn submit(session: &mut Session, text: &str) -> Result<(TurnOutcome, TurnEvents), TurnError> {
    let outcome = session.run_turn(text)?;
    let events = turn_events(&outcome);
    Ok((outcome, events))
}
