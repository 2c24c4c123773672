//! Virtual-clock simulation of whole dialogues from persona scripts.
//!
//! A persona script is a TOML file:
//!
//! ```toml
//! name = "temple-lover"
//! seed = 7
//! utterances = ["Hello, I'm planning a day in Kyoto.", "..."]
//!
//! [latency]
//! respond = { fixed = 1.2 }
//! nlu = { uniform = [0.2, 2.0] }
//! search = { fixed = 0.05 }
//!
//! [timing]              # optional
//! chars_per_second = 8.0
//! user_gap_seconds = 1.0
//!
//! [barrier]             # optional
//! grace_timeout_seconds = 2.0
//! ```
//!
//! Uniform draws use streams derived from `seed`, one per latency source,
//! so async and sync runs of the same script see the same latencies.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

use crate::dst_store::DstStore;
use crate::llm_backend::{with_latency, Backend, LatencyDistribution, LatencyError, MockBackend};
use crate::orchestrator::{
    BarrierPolicy, EngineConfig, PipelineMode, Session, SessionDeps, SpeechTimingModel, TurnError, TurnOutcome,
    TurnTrace, Utterance,
};
use crate::rtdb::{bundled_catalog, SpotCatalog};
use crate::scenario::{DialoguePhase, MockRouteProvider, RouteProvider, ScenarioState};
use crate::time::Micros;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum LatencySpec {
    Fixed(f64),
    Uniform([f64; 2]),
}

impl Default for LatencySpec {
    fn default() -> Self {
        LatencySpec::Fixed(0.0)
    }
}

impl LatencySpec {
    pub fn to_distribution(self, seed: u64) -> Result<LatencyDistribution, LatencyError> {
        match self {
            LatencySpec::Fixed(s) => LatencyDistribution::fixed(s),
            LatencySpec::Uniform([lo, hi]) => LatencyDistribution::uniform(lo, hi, seed),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    #[serde(default)]
    pub respond: LatencySpec,
    #[serde(default)]
    pub nlu: LatencySpec,
    #[serde(default)]
    pub search: LatencySpec,
}

/// Concrete distributions for one run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatencyPlan {
    pub respond: LatencyDistribution,
    pub nlu: LatencyDistribution,
    pub search: LatencyDistribution,
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

impl LatencyConfig {
    pub fn plan(&self, seed: u64) -> Result<LatencyPlan, LatencyError> {
        Ok(LatencyPlan {
            respond: self.respond.to_distribution(derive_seed(seed, 1))?,
            nlu: self.nlu.to_distribution(derive_seed(seed, 2))?,
            search: self.search.to_distribution(derive_seed(seed, 3))?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonaScript {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub utterances: Vec<String>,
    #[serde(default)]
    pub latency: LatencyConfig,
    #[serde(default)]
    pub timing: SpeechTimingModel,
    #[serde(default)]
    pub barrier: BarrierPolicy,
}

impl PersonaScript {
    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let script: PersonaScript = toml::from_str(s).map_err(|e| SimError::InvalidScript(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("persona scripts always serialize")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.name.trim().is_empty() {
            return Err(SimError::InvalidScript("name must not be empty".into()));
        }
        if self.utterances.is_empty() {
            return Err(SimError::InvalidScript("at least one utterance is required".into()));
        }
        if let Some(i) = self.utterances.iter().position(|u| u.trim().is_empty()) {
            return Err(SimError::InvalidScript(format!("utterance {i} is empty")));
        }
        self.timing.validate().map_err(SimError::InvalidScript)?;
        self.barrier.validate().map_err(SimError::InvalidScript)?;
        self.latency
            .plan(self.seed)
            .map_err(|e| SimError::InvalidScript(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid persona script: {0}")]
    InvalidScript(String),
    #[error("script ran out after {turns} turns while the dialogue was in the {phase} phase")]
    ScriptEnded { phase: DialoguePhase, turns: usize },
    #[error("dialogue ended with {remaining} utterances left in the script")]
    ScriptOverrun { remaining: usize },
    #[error("turn {turn_id} failed: {source}")]
    Turn {
        turn_id: usize,
        #[source]
        source: TurnError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnGap {
    pub turn_id: u64,
    pub perceived_gap: Micros,
    pub barrier_wait: Micros,
    pub stale: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimReport {
    pub mode: PipelineMode,
    pub per_turn: Vec<TurnGap>,
    pub mean_gap: Micros,
}

/// Mean to the nearest microsecond, halves rounded up.
pub fn mean_micros(values: impl IntoIterator<Item = Micros>) -> Micros {
    let (sum, n) = values
        .into_iter()
        .fold((0u128, 0u128), |(s, n), v| (s + v.0 as u128, n + 1));
    if n == 0 {
        return Micros::ZERO;
    }
    Micros(((sum + n / 2) / n) as u64)
}

impl SimReport {
    fn from_outcomes(mode: PipelineMode, outcomes: &[TurnOutcome]) -> Self {
        let per_turn: Vec<TurnGap> = outcomes
            .iter()
            .map(|o| TurnGap {
                turn_id: o.trace.turn_id,
                perceived_gap: o.perceived_gap(),
                barrier_wait: o.barrier_wait(),
                stale: o.stale(),
            })
            .collect();
        let mean_gap = mean_micros(per_turn.iter().map(|t| t.perceived_gap));
        Self {
            mode,
            per_turn,
            mean_gap,
        }
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal reports.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}

/// Perceived gaps recomputed from raw trace spans.
pub fn gaps_from_traces<'a>(traces: impl IntoIterator<Item = &'a TurnTrace>) -> Vec<Micros> {
    traces
        .into_iter()
        .map(|t| t.perceived_gap().unwrap_or(Micros::ZERO))
        .collect()
}

/// Backends and catalog a simulation runs against. Latency from the
/// script is layered on top of the given backends.
#[derive(Clone)]
pub struct SimEnv {
    pub catalog: Arc<SpotCatalog>,
    pub responder: Arc<dyn Backend>,
    pub understander: Arc<dyn Backend>,
    pub routes: Arc<dyn RouteProvider>,
}

impl Default for SimEnv {
    fn default() -> Self {
        Self {
            catalog: Arc::new(bundled_catalog()),
            responder: Arc::new(MockBackend),
            understander: Arc::new(MockBackend),
            routes: Arc::new(MockRouteProvider),
        }
    }
}

/// Full result of one simulated dialogue.
#[derive(Debug)]
pub struct SimRun {
    pub report: SimReport,
    pub outcomes: Vec<TurnOutcome>,
    pub traces: Vec<TurnTrace>,
    pub transcript: Vec<Utterance>,
    pub scenario: ScenarioState,
    pub store: Arc<DstStore>,
}

pub fn simulate(script: &PersonaScript, mode: PipelineMode, env: &SimEnv) -> Result<SimRun, SimError> {
    script.validate()?;
    let plan = script
        .latency
        .plan(script.seed)
        .map_err(|e| SimError::InvalidScript(e.to_string()))?;
    let store = Arc::new(DstStore::new());
    let deps = SessionDeps {
        catalog: env.catalog.clone(),
        store: store.clone(),
        responder: Arc::new(with_latency(env.responder.clone(), plan.respond)),
        understander: Arc::new(with_latency(env.understander.clone(), plan.nlu)),
        routes: env.routes.clone(),
    };
    let config = EngineConfig {
        mode,
        timing: script.timing,
        barrier: script.barrier,
        search_latency: plan.search,
        ..EngineConfig::default()
    };
    let mut session =
        Session::new(script.name.clone(), deps, config).map_err(|source| SimError::Turn { turn_id: 0, source })?;
    let mut outcomes = Vec::with_capacity(script.utterances.len());
    for (i, text) in script.utterances.iter().enumerate() {
        if session.phase() == DialoguePhase::End {
            return Err(SimError::ScriptOverrun {
                remaining: script.utterances.len() - i,
            });
        }
        let outcome = session
            .run_turn(text)
            .map_err(|source| SimError::Turn { turn_id: i, source })?;
        outcomes.push(outcome);
    }
    if session.phase() != DialoguePhase::End {
        return Err(SimError::ScriptEnded {
            phase: session.phase(),
            turns: outcomes.len(),
        });
    }
    Ok(SimRun {
        report: SimReport::from_outcomes(mode, &outcomes),
        traces: session.traces().cloned().collect(),
        transcript: session.transcript().to_vec(),
        scenario: session.scenario().clone(),
        outcomes,
        store,
    })
}

/// Runs `script` in `mode` against the mock backends and bundled catalog.
pub fn run_simulation(script: &PersonaScript, mode: PipelineMode) -> Result<SimReport, SimError> {
    Ok(simulate(script, mode, &SimEnv::default())?.report)
}

/// Signed duration in microseconds, exported as seconds with three decimals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(from = "f64")]
pub struct SignedMicros(pub i64);

impl SignedMicros {
    pub fn between(later: Micros, earlier: Micros) -> Self {
        SignedMicros(later.0 as i64 - earlier.0 as i64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }
}

impl From<f64> for SignedMicros {
    fn from(secs: f64) -> Self {
        SignedMicros((secs * 1e6).round() as i64)
    }
}

impl std::fmt::Display for SignedMicros {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        write!(f, "{sign}{}", Micros(self.0.unsigned_abs()).to_export_string())
    }
}

impl Serialize for SignedMicros {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = serde_json::value::RawValue::from_string(self.to_string()).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapDelta {
    pub turn_id: u64,
    pub async_gap: Micros,
    pub sync_gap: Micros,
    /// `sync_gap - async_gap`.
    pub delta: SignedMicros,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub persona: String,
    pub seed: u64,
    #[serde(rename = "async")]
    pub async_report: SimReport,
    #[serde(rename = "sync")]
    pub sync_report: SimReport,
    pub per_turn: Vec<GapDelta>,
    pub mean_delta: SignedMicros,
    /// No turn was slower in async mode.
    pub async_dominates: bool,
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

/// Runs the script in both modes with the same seeds and compares gaps
/// turn by turn.
pub fn compare_modes(script: &PersonaScript) -> Result<ComparisonReport, SimError> {
    compare_modes_in(script, &SimEnv::default())
}

pub fn compare_modes_in(script: &PersonaScript, env: &SimEnv) -> Result<ComparisonReport, SimError> {
    let a = simulate(script, PipelineMode::Async, env)?.report;
    let s = simulate(script, PipelineMode::Sync, env)?.report;
    let per_turn: Vec<GapDelta> = a
        .per_turn
        .iter()
        .zip(&s.per_turn)
        .map(|(x, y)| GapDelta {
            turn_id: x.turn_id,
            async_gap: x.perceived_gap,
            sync_gap: y.perceived_gap,
            delta: SignedMicros::between(y.perceived_gap, x.perceived_gap),
        })
        .collect();
    let async_dominates = per_turn.iter().all(|d| d.delta.0 >= 0);
    if !async_dominates || a.mean_gap > s.mean_gap {
        tracing::warn!(persona = %script.name, "async mode was slower than sync on some turn");
    }
    Ok(ComparisonReport {
        persona: script.name.clone(),
        seed: script.seed,
        mean_delta: SignedMicros::between(s.mean_gap, a.mean_gap),
        async_report: a,
        sync_report: s,
        per_turn,
        async_dominates,
    })
}
