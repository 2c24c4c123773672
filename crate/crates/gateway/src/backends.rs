//! Backend selection for sessions.

use std::path::PathBuf;
use std::sync::Arc;

use asyncmld::llm_backend::{with_latency, Backend, HttpBackend, HttpBackendConfig, MockBackend, ScriptedBackend};
use asyncmld::sim_harness::LatencyConfig;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Scripted,
    Http,
}

impl BackendKind {
    pub const NAMES: [&'static str; 3] = ["mock", "scripted", "http"];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "mock" => Some(BackendKind::Mock),
            "scripted" => Some(BackendKind::Scripted),
            "http" => Some(BackendKind::Http),
            _ => None,
        }
    }
}

/// Where non-mock backends get their material from.
#[derive(Clone, Debug, Default)]
pub struct BackendSources {
    /// Reply script for the scripted backend.
    pub script: Option<PathBuf>,
    pub http: Option<HttpBackendConfig>,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendSetupError {
    #[error("the scripted backend needs a reply script (--script PATH)")]
    MissingScript,
    #[error("the http backend needs --llm-url and --llm-model")]
    MissingHttpConfig,
    #[error(transparent)]
    Backend(#[from] asyncmld::BackendError),
}

/// Path A and path B backends for one session.
pub struct BackendPair {
    pub responder: Arc<dyn Backend>,
    pub understander: Arc<dyn Backend>,
}

pub fn build_backends(
    kind: BackendKind,
    sources: &BackendSources,
    latency: &LatencyConfig,
    seed: u64,
) -> Result<BackendPair, BackendSetupError> {
    let base: Arc<dyn Backend> = match kind {
        BackendKind::Mock => Arc::new(MockBackend),
        BackendKind::Scripted => {
            let path = sources.script.as_ref().ok_or(BackendSetupError::MissingScript)?;
            Arc::new(ScriptedBackend::load(path)?)
        }
        BackendKind::Http => {
            let config = sources.http.clone().ok_or(BackendSetupError::MissingHttpConfig)?;
            Arc::new(HttpBackend::from_env(config)?)
        }
    };
    let plan = latency
        .plan(seed)
        .map_err(|e| asyncmld::BackendError::Config(e.to_string()))?;
    Ok(BackendPair {
        responder: Arc::new(with_latency(base.clone(), plan.respond)),
        understander: Arc::new(with_latency(base, plan.nlu)),
    })
}
