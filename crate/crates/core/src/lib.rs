//! Asynchronous multi-LLM dialogue engine.
//!
//! A user utterance is handed to two paths at once: path A writes and speaks
//! the reply, path B extracts slots, commits them to the dialogue state
//! tracker and searches the spot catalog. Path B's result is joined in front
//! of the next turn, so its latency hides behind the robot's speech.

pub mod dst_store;
pub mod llm_backend;
pub mod nlu;
pub mod orchestrator;
pub mod prompts;
pub mod rtdb;
pub mod scenario;
pub mod sim_harness;
pub mod time;

pub use dst_store::{merge_slots, DstError, DstState, DstStore};
pub use llm_backend::{
    with_latency, Backend, BackendError, BackendRequest, BackendResponse, HttpBackend, HttpBackendConfig,
    LatencyDistribution, MockBackend, Purpose, ScriptEntry, ScriptedBackend,
};
pub use nlu::{build_nlu_prompt, extract_slots, parse_slot_response, MetadataVocabulary, PromptBudget, SlotSet};
pub use orchestrator::{
    estimate_speech_duration, BarrierOutcome, BarrierPolicy, EngineConfig, PipelineMode, Session, SessionDeps,
    SpeechTimingModel, Task, TurnError, TurnOutcome, TurnTrace, Utterance,
};
pub use rtdb::{
    bundled_catalog, ingest_catalog, load_catalog, score_spot, search, RankedSpots, SpotCatalog, SpotRecord,
};
pub use scenario::{build_route, DialogueAction, DialoguePhase, MockRouteProvider, RoutePlan, RouteProvider};
pub use sim_harness::{compare_modes, run_simulation, ComparisonReport, PersonaScript, SimReport};
pub use time::Micros;
