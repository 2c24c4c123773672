use std::sync::Arc;

use asyncmld::dst_store::DstStore;
use asyncmld::llm_backend::{Backend, MockBackend, Purpose, Recording, ScriptEntry, ScriptedBackend};
use asyncmld::orchestrator::{EngineConfig, PipelineMode, Session, SessionDeps, Task};
use asyncmld::rtdb::bundled_catalog;
use asyncmld::scenario::{DialogueAction, DialoguePhase, MockRouteProvider, TravelMode};
use asyncmld::sim_harness::{simulate, PersonaScript, SimEnv};
use proptest::prelude::*;

const FIXED: &str = include_str!("../personas/kyoto_fixed.toml");
const UNIFORM: &str = include_str!("../personas/kyoto_uniform.toml");
const SLOW: &str = include_str!("../personas/kyoto_slow_nlu.toml");

fn persona(src: &str) -> PersonaScript {
    PersonaScript::from_toml_str(src).unwrap()
}

/// Great-circle distance, computed independently of the crate.
fn hand_haversine(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1, la2, lo2) = (a.0.to_radians(), a.1.to_radians(), b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * 6_371_000.0 * h.sqrt().asin()
}

fn loc(id: &str) -> (f64, f64) {
    let c = bundled_catalog();
    let s = c.get(id).unwrap();
    (s.location.lat, s.location.lon)
}

#[test]
fn kyoto_visit_walks_between_nanzenji_and_ginkakuji() {
    let env = SimEnv::default();
    let run = simulate(&persona(FIXED), PipelineMode::Async, &env).unwrap();
    let sc = &run.scenario;
    assert_eq!(sc.phase(), DialoguePhase::End);
    assert_eq!(sc.phase_log(), DialoguePhase::ALL);
    assert_eq!(sc.presented().len(), 4);
    let ids: Vec<&str> = sc.presented().iter().map(|c| c.spot_id.as_str()).collect();
    assert_eq!(ids, ["kyo-004", "kyo-017", "kyo-023", "kyo-056"]);
    assert_eq!(sc.chosen(), ["kyo-004", "kyo-023"]);

    let presents = run
        .outcomes
        .iter()
        .filter(|o| matches!(o.action, DialogueAction::PresentCandidates { .. }))
        .count();
    assert_eq!(presents, 1);

    let route = run
        .outcomes
        .iter()
        .find_map(|o| match &o.action {
            DialogueAction::PresentRoute { plan, .. } => Some(plan.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(route.legs.len(), 1);
    let leg = &route.legs[0];
    let d = hand_haversine(loc("kyo-004"), loc("kyo-023"));
    assert!((leg.distance_m - d).abs() < 1e-6);
    assert!((1500.0..1700.0).contains(&d), "about 1.6 km, got {d}");
    assert_eq!(leg.mode, TravelMode::Walk);
    // 1.6 km at 80 m/min, rounded up
    assert_eq!(leg.duration_min, 20);

    let summary = sc.summarize_plan(&env.catalog).unwrap();
    assert_eq!(summary.matches(". ").count() + 1, route.legs.len());
    assert!(summary.ends_with('.'));
    assert!(!summary.contains("kyo-"));
    assert!(summary.contains("Nanzen-ji") && summary.contains("Ginkaku-ji"));
}

#[test]
fn picking_the_western_temple_takes_transit() {
    let mut script = persona(FIXED);
    script.utterances[3] = "The first and the second, please.".into();
    let run = simulate(&script, PipelineMode::Async, &SimEnv::default()).unwrap();
    assert_eq!(run.scenario.chosen(), ["kyo-004", "kyo-017"]);
    let plan = run
        .outcomes
        .iter()
        .find_map(|o| match &o.action {
            DialogueAction::PresentRoute { plan, .. } => Some(plan.clone()),
            _ => None,
        })
        .unwrap();
    let d = hand_haversine(loc("kyo-004"), loc("kyo-017"));
    assert!((7900.0..8000.0).contains(&d), "about 8 km, got {d}");
    assert_eq!(plan.legs[0].mode, TravelMode::Transit);
    // ceil(7950 / 400) + 5 min overhead
    assert_eq!(plan.legs[0].duration_min, 25);
}

#[test]
fn bad_selection_is_asked_again() {
    let mut script = persona(FIXED);
    script.utterances.insert(3, "Number 1 and number 9.".into());
    let run = simulate(&script, PipelineMode::Async, &SimEnv::default()).unwrap();
    match &run.outcomes[3].action {
        DialogueAction::RequestChoice { problem: Some(p), .. } => assert!(!p.is_empty()),
        other => panic!("expected a re-ask, got {other:?}"),
    }
    assert_eq!(run.scenario.chosen(), ["kyo-004", "kyo-023"]);
}

#[test]
fn every_trace_fans_out() {
    let mut runs = Vec::new();
    for src in [FIXED, UNIFORM, SLOW] {
        runs.push(simulate(&persona(src), PipelineMode::Async, &SimEnv::default()).unwrap());
    }
    for seed in 0..25 {
        let mut s = persona(UNIFORM);
        s.seed = seed;
        runs.push(simulate(&s, PipelineMode::Async, &SimEnv::default()).unwrap());
    }
    for run in &runs {
        for t in &run.traces {
            t.check_invariants(PipelineMode::Async).unwrap();
            assert_eq!(t.span(Task::Respond).unwrap().start, t.span(Task::Nlu).unwrap().start);
        }
    }
}

#[test]
fn sync_traces_are_sequential() {
    let run = simulate(&persona(FIXED), PipelineMode::Sync, &SimEnv::default()).unwrap();
    for t in &run.traces {
        t.check_invariants(PipelineMode::Sync).unwrap();
        assert_eq!(t.span(Task::Respond).unwrap().start, t.span(Task::Search).unwrap().end);
    }
}

#[test]
fn recorded_replies_replay_identically() {
    let script = persona(UNIFORM);
    let responder = Arc::new(Recording::new(MockBackend));
    let understander = Arc::new(Recording::new(MockBackend));
    let env = SimEnv {
        responder: responder.clone(),
        understander: understander.clone(),
        ..SimEnv::default()
    };
    let live = simulate(&script, PipelineMode::Async, &env).unwrap();

    let mut entries: Vec<ScriptEntry> = responder.entries();
    entries.extend(understander.entries());
    assert!(entries.iter().any(|e| e.purpose == Purpose::Nlu));
    let scripted: Arc<dyn Backend> = Arc::new(ScriptedBackend::from_entries(entries));
    let replay_env = SimEnv {
        responder: scripted.clone(),
        understander: scripted,
        ..SimEnv::default()
    };
    let replay = simulate(&script, PipelineMode::Async, &replay_env).unwrap();
    assert_eq!(replay.transcript, live.transcript);
    assert_eq!(replay.traces, live.traces);
    assert_eq!(replay.report, live.report);
}

fn session_with(understander: Arc<dyn Backend>) -> (Session, Arc<DstStore>) {
    let store = Arc::new(DstStore::new());
    let deps = SessionDeps {
        catalog: Arc::new(bundled_catalog()),
        store: store.clone(),
        responder: Arc::new(MockBackend),
        understander,
        routes: Arc::new(MockRouteProvider),
    };
    (Session::new("s1", deps, EngineConfig::default()).unwrap(), store)
}

#[test]
fn garbled_understanding_degrades_without_touching_state() {
    let garbage = ScriptedBackend::from_entries(["not json", "{\"slots\": 3}"].map(|text| ScriptEntry {
        session_id: "s1".into(),
        purpose: Purpose::Nlu,
        text: text.into(),
    }));
    let (mut session, store) = session_with(Arc::new(garbage));
    let out = session.run_turn("I love temples").unwrap();
    assert!(out.degraded);
    assert!(out.nlu_failure.is_some());
    assert!(!out.system.text.is_empty());
    assert!(out.trace.span(Task::DstCommit).is_none());
    assert_eq!(store.current_version("s1").unwrap(), 0);
    out.trace.check_invariants(PipelineMode::Async).unwrap();

    // script exhausted now: still degraded, dialogue continues
    let out = session.run_turn("And tofu").unwrap();
    assert!(out.degraded);
    assert_eq!(store.current_version("s1").unwrap(), 0);
}

#[test]
fn out_of_vocabulary_slots_are_dropped() {
    let reply = r#"{"slots":[{"category":"Seeing","value":"Temple"},{"category":"Seeing","value":"volcano"}]}"#;
    let backend = ScriptedBackend::from_entries([ScriptEntry {
        session_id: "*".into(),
        purpose: Purpose::Nlu,
        text: reply.into(),
    }]);
    let (mut session, store) = session_with(Arc::new(backend));
    let out = session.run_turn("temples and volcanoes").unwrap();
    assert!(!out.degraded);
    let state = store.get_snapshot("s1", None).unwrap();
    assert_eq!(state.slots.iter().collect::<Vec<_>>(), [("Seeing", "temple")]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Path B of turn n adds no wait at turn n + 1 when its work fits in
    /// the reply, the speech and the user's think time. Checked on turns
    /// whose own barrier was fresh, so path B started on time.
    #[test]
    fn hiding_condition_means_no_wait(
        respond in 0.0f64..3.0,
        nlu in 0.0f64..12.0,
        search in 0.0f64..3.0,
        cps in 5.0f64..80.0,
        gap in 0.0f64..2.0,
    ) {
        let src = format!(
            r#"
name = "hiding"
utterances = ["Hello, I'm planning a day in Kyoto.", "I love old temples and quiet gardens.",
              "I want to eat tofu and drink matcha.", "Tell me more.", "Tell me more.", "Tell me more."]
[latency]
respond = {{ fixed = {respond} }}
nlu = {{ fixed = {nlu} }}
search = {{ fixed = {search} }}
[timing]
chars_per_second = {cps}
user_gap_seconds = {gap}
"#
        );
        let script = PersonaScript::from_toml_str(&src).unwrap();
        let env = SimEnv::default();
        let mut session_run = Vec::new();
        {
            let store = Arc::new(DstStore::new());
            let plan = script.latency.plan(script.seed).unwrap();
            let deps = SessionDeps {
                catalog: env.catalog.clone(),
                store,
                responder: Arc::new(asyncmld::with_latency(MockBackend, plan.respond)),
                understander: Arc::new(asyncmld::with_latency(MockBackend, plan.nlu)),
                routes: env.routes.clone(),
            };
            let config = EngineConfig {
                timing: script.timing,
                search_latency: plan.search,
                ..EngineConfig::default()
            };
            let mut s = Session::new("h", deps, config).unwrap();
            for u in &script.utterances {
                session_run.push(s.run_turn(u).unwrap());
            }
        }
        for pair in session_run.windows(2) {
            let (prev, next) = (&pair[0], &pair[1]);
            prev.trace.check_invariants(PipelineMode::Async).unwrap();
            if prev.stale() {
                continue;
            }
            let t = &prev.trace;
            let dur = |task| t.span(task).map_or(asyncmld::Micros::ZERO, |s| s.duration());
            let b = dur(Task::Nlu) + dur(Task::Search);
            let slack = dur(Task::Respond) + dur(Task::Speak) + script.timing.user_gap();
            if b <= slack {
                prop_assert_eq!(next.barrier_wait(), asyncmld::Micros::ZERO);
                prop_assert!(!next.stale());
            }
        }
    }
}
