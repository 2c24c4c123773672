//! Typed stream events and their per-turn order.

use asyncmld::orchestrator::{Span, TurnOutcome};
use asyncmld::scenario::{DialogueAction, DialoguePhase};
use asyncmld::Micros;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    UserEcho,
    SystemUtterance,
    Candidates,
    Route,
    PhaseChange,
    SpeakingStarted,
    TraceSpan,
    SpeakingFinished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamEvent {
    #[serde(rename = "type")]
    pub kind: EventType,
    pub turn_id: Option<u64>,
    pub payload: Value,
}

impl StreamEvent {
    fn new(kind: EventType, turn_id: Option<u64>, payload: Value) -> Self {
        Self { kind, turn_id, payload }
    }
}

/// Events for one turn, split where the simulated speech plays.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnEvents {
    pub leading: Vec<StreamEvent>,
    pub finished: StreamEvent,
    /// Virtual speech duration; the pacer sleeps this long (scaled).
    pub speech: Micros,
}

impl TurnEvents {
    pub fn into_vec(self) -> Vec<StreamEvent> {
        let mut v = self.leading;
        v.push(self.finished);
        v
    }
}

fn lane(span: &Span) -> &'static str {
    if span.task.is_path_a() {
        "A"
    } else {
        "B"
    }
}

fn phase_changes(turn_id: Option<u64>, from: DialoguePhase, entered: &[DialoguePhase]) -> Vec<StreamEvent> {
    let mut prev = from;
    entered
        .iter()
        .map(|&to| {
            let ev = StreamEvent::new(EventType::PhaseChange, turn_id, json!({ "from": prev, "to": to }));
            prev = to;
            ev
        })
        .collect()
}

fn speaking(turn_id: Option<u64>, start: Micros, speech: Micros) -> (StreamEvent, StreamEvent) {
    (
        StreamEvent::new(
            EventType::SpeakingStarted,
            turn_id,
            json!({ "at": start, "duration": speech }),
        ),
        StreamEvent::new(EventType::SpeakingFinished, turn_id, json!({ "at": start + speech })),
    )
}

/// user_echo, system_utterance, any candidates/route/phase_change,
/// speaking_started, one trace_span per span, then speaking_finished.
pub fn turn_events(outcome: &TurnOutcome) -> TurnEvents {
    let id = Some(outcome.trace.turn_id);
    let mut leading = vec![
        StreamEvent::new(EventType::UserEcho, id, json!({ "text": outcome.user.text })),
        StreamEvent::new(
            EventType::SystemUtterance,
            id,
            json!({
                "text": outcome.system.text,
                "stale": outcome.stale(),
                "degraded": outcome.degraded,
            }),
        ),
    ];
    match &outcome.action {
        DialogueAction::PresentCandidates { cards } => {
            leading.push(StreamEvent::new(EventType::Candidates, id, json!({ "cards": cards })));
        }
        DialogueAction::PresentRoute { plan, summary, .. } => {
            leading.push(StreamEvent::new(
                EventType::Route,
                id,
                json!({ "plan": plan, "summary": summary }),
            ));
        }
        DialogueAction::RouteUnavailable { summary, .. } => {
            leading.push(StreamEvent::new(
                EventType::Route,
                id,
                json!({ "plan": null, "summary": summary }),
            ));
        }
        _ => {}
    }
    leading.extend(phase_changes(id, outcome.phase_before, &outcome.phases_entered));
    let speak_start = outcome
        .trace
        .span(asyncmld::Task::Speak)
        .map_or(Micros::ZERO, |s| s.start);
    let (started, finished) = speaking(id, speak_start, outcome.speech);
    leading.push(started);
    for span in &outcome.trace.spans {
        leading.push(StreamEvent::new(
            EventType::TraceSpan,
            id,
            json!({ "task": span.task, "start": span.start, "end": span.end, "lane": lane(span) }),
        ));
    }
    TurnEvents {
        leading,
        finished,
        speech: outcome.speech,
    }
}

/// Events for the opening statement, which belongs to no turn.
pub fn opening_events(text: &str, spoken_at: Micros, speech: Micros) -> TurnEvents {
    let mut leading = vec![StreamEvent::new(
        EventType::SystemUtterance,
        None,
        json!({ "text": text, "stale": false, "degraded": false }),
    )];
    leading.extend(phase_changes(None, DialoguePhase::Welcome, &[DialoguePhase::Recommend]));
    let (started, finished) = speaking(None, spoken_at, speech);
    leading.push(started);
    TurnEvents {
        leading,
        finished,
        speech,
    }
}
