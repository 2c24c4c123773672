//! Dual-path turn engine.
//!
//! Every user utterance fans out to path A (reply generation, then speech)
//! and path B (understanding, DST commit, catalog search) at the same
//! virtual instant. Path B's result for turn `n` becomes visible to path A
//! at the barrier in front of turn `n + 1`. If it is not ready within the
//! grace timeout, the turn goes ahead with the latest committed state and
//! the late result is picked up at a later barrier.
//!
//! The two backend calls of a turn run on separate threads; their ordering
//! and visibility are decided on the virtual clock, so traces are identical
//! across runs whatever the thread interleaving.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dst_store::{DstError, DstState, DstStore};
use crate::llm_backend::{Backend, BackendError, BackendRequest, LatencyDistribution, LatencySampler};
use crate::nlu::{self, Extraction, NluContext, PromptBudget, SlotSet};
use crate::prompts::{self, RespondPromptParts};
use crate::rtdb::{self, RankedSpots, SpotCatalog};
use crate::scenario::{
    DialogueAction, DialoguePhase, RouteProvider, ScenarioConfig, ScenarioContext, ScenarioError, ScenarioState,
};
use crate::time::{EventQueue, Micros, VirtualClock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    User,
    System,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub turn_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Respond,
    Speak,
    Nlu,
    DstCommit,
    Search,
    BarrierWait,
}

impl Task {
    /// Path A tasks; everything else belongs to path B or the barrier.
    pub fn is_path_a(self) -> bool {
        matches!(self, Task::Respond | Task::Speak)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub task: Task,
    pub start: Micros,
    pub end: Micros,
}

impl Span {
    fn new(task: Task, start: Micros, end: Micros) -> Self {
        Self { task, start, end }
    }

    pub fn duration(&self) -> Micros {
        self.end.saturating_sub(self.start)
    }
}

/// Timed record of one turn's tasks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn_id: u64,
    pub spans: Vec<Span>,
    pub dst_version_used: u64,
}

impl TurnTrace {
    pub fn span(&self, task: Task) -> Option<&Span> {
        self.spans.iter().find(|s| s.task == task)
    }

    fn required(&self, task: Task) -> Result<&Span, String> {
        self.span(task)
            .ok_or_else(|| format!("turn {}: missing {task:?} span", self.turn_id))
    }

    /// When the user's text was accepted.
    pub fn accepted_at(&self) -> Option<Micros> {
        self.span(Task::BarrierWait).map(|s| s.start)
    }

    pub fn barrier_wait(&self) -> Micros {
        self.span(Task::BarrierWait).map_or(Micros::ZERO, Span::duration)
    }

    /// Time from accepting the user's text to the start of system speech.
    pub fn perceived_gap(&self) -> Option<Micros> {
        Some(self.span(Task::Speak)?.start.saturating_sub(self.accepted_at()?))
    }

    /// Checks span ordering for the pipeline mode that produced the trace.
    pub fn check_invariants(&self, mode: PipelineMode) -> Result<(), String> {
        for s in &self.spans {
            if s.end < s.start {
                return Err(format!("turn {}: {:?} ends before it starts", self.turn_id, s.task));
            }
        }
        let wait = self.required(Task::BarrierWait)?;
        let respond = self.required(Task::Respond)?;
        let speak = self.required(Task::Speak)?;
        let nlu = self.required(Task::Nlu)?;
        let err = |what: &str| Err(format!("turn {}: {what}", self.turn_id));
        if speak.start != respond.end {
            return err("speech must start when the reply is ready");
        }
        let commit = self.span(Task::DstCommit);
        let search = self.span(Task::Search);
        if commit.is_some() != search.is_some() {
            return err("DstCommit and Search must appear together");
        }
        if let (Some(c), Some(s)) = (commit, search) {
            if c.start < nlu.end {
                return err("DstCommit starts before Nlu ends");
            }
            if s.start < c.end {
                return err("Search starts before DstCommit ends");
            }
        }
        match mode {
            PipelineMode::Async => {
                if respond.start != nlu.start {
                    return err("Respond and Nlu must start together");
                }
                if respond.start != wait.end {
                    return err("Respond must start when the barrier releases");
                }
            }
            PipelineMode::Sync => {
                if nlu.start != wait.end {
                    return err("Nlu must start when the turn starts");
                }
                let b_end = search.map_or(nlu.end, |s| s.end);
                if respond.start < b_end {
                    return err("Respond starts before path B finishes");
                }
            }
        }
        Ok(())
    }
}

/// Writes one JSON record per turn: `turn_id`, `spans` and
/// `dst_version_used`, times in seconds with three decimals.
pub fn write_trace_export<'a>(
    traces: impl IntoIterator<Item = &'a TurnTrace>,
    mut out: impl Write,
) -> std::io::Result<()> {
    for t in traces {
        writeln!(out, "{}", serde_json::to_string(t).map_err(std::io::Error::other)?)?;
    }
    out.flush()
}

/// Character-rate model of how long the robot takes to say something.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeechTimingModel {
    #[serde(default = "default_cps")]
    pub chars_per_second: f64,
    /// Think time between the end of system speech and the next utterance.
    #[serde(default = "default_user_gap")]
    pub user_gap_seconds: f64,
}

fn default_cps() -> f64 {
    8.0
}

fn default_user_gap() -> f64 {
    1.0
}

impl Default for SpeechTimingModel {
    fn default() -> Self {
        Self {
            chars_per_second: default_cps(),
            user_gap_seconds: default_user_gap(),
        }
    }
}

impl SpeechTimingModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.chars_per_second.is_finite() && self.chars_per_second > 0.0) {
            return Err(format!(
                "chars_per_second must be positive, got {}",
                self.chars_per_second
            ));
        }
        if !(self.user_gap_seconds.is_finite() && self.user_gap_seconds >= 0.0) {
            return Err(format!(
                "user_gap_seconds must be non-negative, got {}",
                self.user_gap_seconds
            ));
        }
        Ok(())
    }

    pub fn speech_duration(&self, text: &str) -> Micros {
        Micros::from_secs_f64(estimate_speech_duration(text, self))
    }

    pub fn user_gap(&self) -> Micros {
        Micros::from_secs_f64(self.user_gap_seconds)
    }
}

/// Seconds needed to speak `text`: character count over the speaking rate.
pub fn estimate_speech_duration(text: &str, model: &SpeechTimingModel) -> f64 {
    text.chars().count() as f64 / model.chars_per_second
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeoutAction {
    /// Go ahead with the latest committed DST.
    #[default]
    UseStale,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierPolicy {
    #[serde(default = "default_grace")]
    pub grace_timeout_seconds: f64,
    #[serde(default)]
    pub on_timeout: TimeoutAction,
}

fn default_grace() -> f64 {
    2.0
}

impl Default for BarrierPolicy {
    fn default() -> Self {
        Self {
            grace_timeout_seconds: default_grace(),
            on_timeout: TimeoutAction::UseStale,
        }
    }
}

impl BarrierPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.grace_timeout_seconds.is_finite() && self.grace_timeout_seconds >= 0.0) {
            return Err(format!(
                "grace_timeout_seconds must be finite and non-negative, got {}",
                self.grace_timeout_seconds
            ));
        }
        Ok(())
    }

    pub fn grace(&self) -> Micros {
        Micros::from_secs_f64(self.grace_timeout_seconds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BarrierOutcome {
    Fresh(u64),
    Stale(u64),
}

impl BarrierOutcome {
    pub fn version(self) -> u64 {
        match self {
            BarrierOutcome::Fresh(v) | BarrierOutcome::Stale(v) => v,
        }
    }

    pub fn is_stale(self) -> bool {
        matches!(self, BarrierOutcome::Stale(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BarrierJoin {
    pub outcome: BarrierOutcome,
    pub joined_at: Micros,
    pub wait: Micros,
}

/// Async runs the two paths concurrently; Sync is the sequential baseline
/// (understanding and search, then the reply) over the same dialogue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineMode {
    #[default]
    Async,
    Sync,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineConfig {
    pub mode: PipelineMode,
    pub timing: SpeechTimingModel,
    pub barrier: BarrierPolicy,
    pub budget: PromptBudget,
    pub search_k: usize,
    pub search_latency: LatencyDistribution,
    pub scenario: ScenarioConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: PipelineMode::Async,
            timing: SpeechTimingModel::default(),
            barrier: BarrierPolicy::default(),
            budget: PromptBudget::default(),
            search_k: 4,
            search_latency: LatencyDistribution::ZERO,
            scenario: ScenarioConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TurnError {
    #[error("user text is empty")]
    EmptyUtterance,
    #[error("the dialogue has ended")]
    Ended,
    #[error("reply backend failed: {0}")]
    Backend(#[source] BackendError),
    #[error("reply backend returned an empty reply")]
    EmptyReply,
    #[error(transparent)]
    Dst(#[from] DstError),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

impl From<ScenarioError> for TurnError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Ended => TurnError::Ended,
            other => TurnError::Config(other.to_string()),
        }
    }
}

/// Everything a finished turn produced.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnOutcome {
    pub user: Utterance,
    pub system: Utterance,
    pub trace: TurnTrace,
    pub barrier: BarrierOutcome,
    pub action: DialogueAction,
    pub phase_before: DialoguePhase,
    pub phase_after: DialoguePhase,
    /// Phases entered during this turn, in order.
    pub phases_entered: Vec<DialoguePhase>,
    /// Path B failed to understand the utterance; DST left unchanged.
    pub degraded: bool,
    pub nlu_failure: Option<String>,
    pub speech: Micros,
}

impl TurnOutcome {
    pub fn stale(&self) -> bool {
        self.barrier.is_stale()
    }

    pub fn barrier_wait(&self) -> Micros {
        self.trace.barrier_wait()
    }

    pub fn perceived_gap(&self) -> Micros {
        self.trace
            .perceived_gap()
            .expect("engine traces always carry Speak and BarrierWait")
    }
}

/// Per-turn summary kept by the session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub trace: TurnTrace,
    pub barrier: BarrierOutcome,
    pub stale: bool,
    pub degraded: bool,
}

#[derive(Clone, Debug)]
struct PathBResult {
    version: u64,
    search: Option<RankedSpots>,
}

/// The services a session runs against.
#[derive(Clone)]
pub struct SessionDeps {
    pub catalog: Arc<SpotCatalog>,
    pub store: Arc<DstStore>,
    /// Path A model.
    pub responder: Arc<dyn Backend>,
    /// Path B model.
    pub understander: Arc<dyn Backend>,
    pub routes: Arc<dyn RouteProvider>,
}

/// One dialogue: scenario state, virtual clock, in-flight path-B results
/// and the turn log.
pub struct Session {
    id: String,
    deps: SessionDeps,
    config: EngineConfig,
    search_sampler: LatencySampler,
    scenario: ScenarioState,
    clock: VirtualClock,
    pending: EventQueue<PathBResult>,
    // turn id -> (completion time, DST version after path B)
    launched: BTreeMap<u64, (Micros, u64)>,
    last_b_end: Micros,
    last_launched: Option<u64>,
    visible_version: u64,
    visible_search: Option<RankedSpots>,
    next_turn_id: u64,
    turns: Vec<TurnRecord>,
    transcript: Vec<Utterance>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("phase", &self.scenario.phase())
            .field("turns", &self.turns.len())
            .finish_non_exhaustive()
    }
}

impl Session {
    /// Creates the session and its empty DST entry.
    pub fn new(id: impl Into<String>, deps: SessionDeps, config: EngineConfig) -> Result<Self, TurnError> {
        let id = id.into();
        config.timing.validate().map_err(TurnError::Config)?;
        config.barrier.validate().map_err(TurnError::Config)?;
        if config.search_k == 0 {
            return Err(TurnError::Config("search_k must be at least 1".into()));
        }
        deps.store.create_session(&id)?;
        Ok(Self {
            search_sampler: LatencySampler::new(config.search_latency),
            id,
            deps,
            config,
            scenario: ScenarioState::new(),
            clock: VirtualClock::new(),
            pending: EventQueue::new(),
            launched: BTreeMap::new(),
            last_b_end: Micros::ZERO,
            last_launched: None,
            visible_version: 0,
            visible_search: None,
            next_turn_id: 0,
            turns: Vec::new(),
            transcript: Vec::new(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn catalog(&self) -> &SpotCatalog {
        &self.deps.catalog
    }

    pub fn phase(&self) -> DialoguePhase {
        self.scenario.phase()
    }

    pub fn scenario(&self) -> &ScenarioState {
        &self.scenario
    }

    pub fn now(&self) -> Micros {
        self.clock.now()
    }

    pub fn turns(&self) -> &[TurnRecord] {
        &self.turns
    }

    pub fn traces(&self) -> impl Iterator<Item = &TurnTrace> {
        self.turns.iter().map(|t| &t.trace)
    }

    pub fn transcript(&self) -> &[Utterance] {
        &self.transcript
    }

    /// Number of path-B results not yet visible to path A.
    pub fn pending_results(&self) -> usize {
        self.pending.len()
    }

    /// Latest committed DST state, visible or not.
    pub fn latest_state(&self) -> Result<Arc<DstState>, DstError> {
        self.deps.store.get_snapshot(&self.id, None)
    }

    /// The DST state and search result path A may use right now.
    pub fn snapshot_for_prompt(&self) -> Result<(Arc<DstState>, Option<RankedSpots>), DstError> {
        let dst = self.deps.store.get_snapshot(&self.id, Some(self.visible_version))?;
        Ok((dst, self.visible_search.clone()))
    }

    /// Speaks the opening statement if the dialogue has not started and
    /// moves to the recommendation phase. Returns `None` once past Welcome.
    pub fn open(&mut self) -> Option<String> {
        if self.scenario.phase() != DialoguePhase::Welcome {
            return None;
        }
        let dst = DstState::empty(self.id.clone());
        let ctx = ScenarioContext {
            catalog: &self.deps.catalog,
            routes: &*self.deps.routes,
            config: &self.config.scenario,
        };
        let action = self.scenario.next_action(&ctx, &dst, None, "").ok()?;
        let text = action.draft();
        let speech = self.config.timing.speech_duration(&text);
        self.clock.advance_by(speech + self.config.timing.user_gap());
        Some(text)
    }

    fn visible_at(&self, t: Micros) -> (u64, Option<RankedSpots>) {
        let mut version = self.visible_version;
        let mut search = self.visible_search.clone();
        let mut due: Vec<(Micros, &PathBResult)> = self.pending.iter().filter(|(at, _)| *at <= t).collect();
        due.sort_by_key(|(at, _)| *at);
        for (_, r) in due {
            version = version.max(r.version);
            if r.search.is_some() {
                search = r.search.clone();
            }
        }
        (version, search)
    }

    fn plan_barrier(&self, turn_id: u64, policy: &BarrierPolicy) -> BarrierJoin {
        let now = self.clock.now();
        let Some(&(done_at, version)) = self.launched.get(&turn_id) else {
            return BarrierJoin {
                outcome: BarrierOutcome::Fresh(self.visible_version),
                joined_at: now,
                wait: Micros::ZERO,
            };
        };
        let grace = policy.grace();
        if done_at <= now + grace {
            BarrierJoin {
                outcome: BarrierOutcome::Fresh(version),
                joined_at: now,
                wait: done_at.saturating_sub(now),
            }
        } else {
            let (stale_version, _) = self.visible_at(now + grace);
            BarrierJoin {
                outcome: BarrierOutcome::Stale(stale_version),
                joined_at: now,
                wait: grace,
            }
        }
    }

    fn apply_barrier(&mut self, join: &BarrierJoin) {
        self.clock.advance_to(join.joined_at + join.wait);
        let now = self.clock.now();
        while let Some((_, r)) = self.pending.pop_due(now) {
            self.visible_version = self.visible_version.max(r.version);
            if r.search.is_some() {
                self.visible_search = r.search;
            }
        }
        let keep_from = self.last_launched.unwrap_or(0);
        self.launched.retain(|&t, _| t >= keep_from);
    }

    /// Waits, on the virtual clock, for turn `turn_id`'s path B. Returns
    /// `Fresh` if it finished within the grace timeout, otherwise `Stale`
    /// with the latest version visible after waiting the full grace period.
    pub fn barrier_join(&mut self, turn_id: u64, policy: &BarrierPolicy) -> BarrierJoin {
        let join = self.plan_barrier(turn_id, policy);
        self.apply_barrier(&join);
        join
    }

    /// Runs one user turn. On a reply-backend failure the session is left
    /// exactly as it was; a path-B failure only marks the turn degraded.
    pub fn run_turn(&mut self, user_text: &str) -> Result<TurnOutcome, TurnError> {
        let text = user_text.trim();
        if text.is_empty() {
            return Err(TurnError::EmptyUtterance);
        }
        if self.scenario.phase() == DialoguePhase::End {
            return Err(TurnError::Ended);
        }
        let turn_id = self.next_turn_id;
        let join = match self.last_launched {
            Some(prev) => self.plan_barrier(prev, &self.config.barrier),
            None => BarrierJoin {
                outcome: BarrierOutcome::Fresh(self.visible_version),
                joined_at: self.clock.now(),
                wait: Micros::ZERO,
            },
        };
        let accepted = join.joined_at;
        let start = accepted + join.wait;
        let (version_used, search_used) = self.visible_at(start);
        let dst = self.deps.store.get_snapshot(&self.id, Some(version_used))?;

        let mut scenario = self.scenario.clone();
        let phase_before = scenario.phase();
        let log_before = scenario.phase_log().len();
        let ctx = ScenarioContext {
            catalog: &self.deps.catalog,
            routes: &*self.deps.routes,
            config: &self.config.scenario,
        };
        let action = scenario.plan_turn(&ctx, &dst, search_used.as_ref(), text)?;
        let request = BackendRequest {
            purpose: action.purpose(),
            prompt: prompts::respond_prompt(&RespondPromptParts {
                phase: &phase_before.to_string(),
                preferences: &dst.slots.describe(),
                context: &action.context(),
                user_text: text,
                draft: &action.draft(),
            }),
            session_id: self.id.clone(),
            turn_id,
        };

        let responder = &*self.deps.responder;
        let understander = &*self.deps.understander;
        let vocabulary = self.deps.catalog.vocabulary();
        let budget = &self.config.budget;
        let session_id = self.id.as_str();
        let (reply, extraction) = std::thread::scope(|s| {
            let path_b = s.spawn(move || {
                nlu::extract_slots(
                    text,
                    vocabulary,
                    understander,
                    budget,
                    NluContext { session_id, turn_id },
                )
            });
            let reply = responder.complete(&request);
            (reply, path_b.join())
        });
        let extraction = extraction.unwrap_or_else(|_| Extraction {
            slots: SlotSet::new(),
            dropped: 0,
            attempts: 1,
            degraded: true,
            failure: Some("understanding task panicked".into()),
            latency: Micros::ZERO,
        });
        let reply = reply.map_err(TurnError::Backend)?;
        let reply_text = reply.text.trim().to_string();
        if reply_text.is_empty() {
            return Err(TurnError::EmptyReply);
        }

        // path A succeeded: commit the turn
        self.apply_barrier(&join);
        let search_latency = self.search_sampler.sample();
        let mut degraded = extraction.degraded;
        let mut failure = extraction.failure.clone();
        let committed = if degraded {
            None
        } else {
            match self.deps.store.commit(&self.id, &extraction.slots, turn_id) {
                Ok(state) => {
                    let ranked = rtdb::search(
                        &self.deps.catalog,
                        &state,
                        self.config.search_k,
                        &scenario.presented_ids(),
                    );
                    Some((state.version, ranked))
                }
                Err(e) => {
                    degraded = true;
                    failure = Some(e.to_string());
                    None
                }
            }
        };
        if let Some(reason) = &failure {
            if degraded {
                tracing::warn!(session = %self.id, turn_id, %reason, "path B degraded; DST unchanged");
            }
        }

        let mut spans = vec![Span::new(Task::BarrierWait, accepted, start)];
        let nlu_span = Span::new(Task::Nlu, start, start + extraction.latency);
        let commit_at = nlu_span.end.max(self.last_b_end);
        let mut b_spans = vec![nlu_span];
        let b_end = match &committed {
            Some(_) => {
                b_spans.push(Span::new(Task::DstCommit, commit_at, commit_at));
                b_spans.push(Span::new(Task::Search, commit_at, commit_at + search_latency));
                commit_at + search_latency
            }
            None => commit_at,
        };
        let respond_start = match self.config.mode {
            PipelineMode::Async => start,
            PipelineMode::Sync => b_end,
        };
        let respond = Span::new(Task::Respond, respond_start, respond_start + reply.latency_injected);
        let speech = self.config.timing.speech_duration(&reply_text);
        let speak = Span::new(Task::Speak, respond.end, respond.end + speech);
        spans.push(respond);
        spans.push(speak);
        spans.extend(b_spans);

        let (b_version, b_search) = match committed {
            Some((v, ranked)) => (v, Some(ranked)),
            None => (self.deps.store.current_version(&self.id)?, None),
        };
        self.pending.schedule(
            b_end,
            PathBResult {
                version: b_version,
                search: b_search,
            },
        );
        self.launched.insert(turn_id, (b_end, b_version));
        self.last_b_end = b_end;
        self.last_launched = Some(turn_id);
        self.clock.advance_to(speak.end + self.config.timing.user_gap());

        let trace = TurnTrace {
            turn_id,
            spans,
            dst_version_used: version_used,
        };
        let phase_after = scenario.phase();
        let phases_entered = scenario.phase_log()[log_before..].to_vec();
        self.scenario = scenario;
        self.next_turn_id += 1;
        self.turns.push(TurnRecord {
            trace: trace.clone(),
            barrier: join.outcome,
            stale: join.outcome.is_stale(),
            degraded,
        });
        let user = Utterance {
            speaker: Speaker::User,
            text: text.to_string(),
            turn_id,
        };
        let system = Utterance {
            speaker: Speaker::System,
            text: reply_text,
            turn_id,
        };
        self.transcript.push(user.clone());
        self.transcript.push(system.clone());
        Ok(TurnOutcome {
            user,
            system,
            trace,
            barrier: join.outcome,
            action,
            phase_before,
            phase_after,
            phases_entered,
            degraded,
            nlu_failure: if degraded { failure } else { None },
            speech,
        })
    }
}
