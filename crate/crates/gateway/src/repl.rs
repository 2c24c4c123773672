//! Terminal dialogue over the same engine as the HTTP gateway.

use std::io::{self, BufRead, Write};

use asyncmld::orchestrator::write_trace_export;
use asyncmld::scenario::DialoguePhase;

use crate::engine::{self, CreateError, Engine, SessionRequest};
use crate::events::{EventType, StreamEvent};

#[derive(Debug, thiserror::Error)]
pub enum ReplError {
    #[error(transparent)]
    Create(#[from] CreateError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn render(out: &mut impl Write, ev: &StreamEvent) -> io::Result<()> {
    let text = |key: &str| ev.payload[key].as_str().unwrap_or_default().to_string();
    match ev.kind {
        EventType::SystemUtterance => {
            let mut flags = String::new();
            if ev.payload["stale"] == true {
                flags.push_str(" [stale]");
            }
            if ev.payload["degraded"] == true {
                flags.push_str(" [not understood]");
            }
            writeln!(out, "robot: {}{flags}", text("text"))
        }
        EventType::Candidates => {
            for (i, card) in ev.payload["cards"].as_array().into_iter().flatten().enumerate() {
                writeln!(
                    out,
                    "  [{}] {}: {}",
                    i + 1,
                    card["name"].as_str().unwrap_or_default(),
                    card["description"].as_str().unwrap_or_default()
                )?;
            }
            Ok(())
        }
        EventType::Route => writeln!(out, "  route: {}", text("summary")),
        EventType::PhaseChange => writeln!(
            out,
            "  ({} -> {})",
            ev.payload["from"].as_str().unwrap_or_default(),
            ev.payload["to"].as_str().unwrap_or_default()
        ),
        _ => Ok(()),
    }
}

/// Reads user lines from `input` until the dialogue ends or input runs out.
/// `:trace` prints the turn traces, `:state` the DST, `:quit` leaves.
/// Returns every stream event the session produced.
pub fn run_repl(engine: &Engine, input: impl BufRead, mut out: impl Write) -> Result<Vec<StreamEvent>, ReplError> {
    let (mut session, _) = engine.create_session("repl", &SessionRequest::default())?;
    let mut log = Vec::new();
    if let Some(events) = engine::open(&mut session) {
        for ev in events.into_vec() {
            render(&mut out, &ev)?;
            log.push(ev);
        }
    }
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        match line {
            "" => continue,
            ":quit" => break,
            ":trace" => {
                write_trace_export(session.traces(), &mut out)?;
                continue;
            }
            ":state" => {
                let dst = session.latest_state().map_err(|e| io::Error::other(e.to_string()))?;
                writeln!(out, "v{}: {}", dst.version, dst.slots.describe())?;
                continue;
            }
            _ => {}
        }
        writeln!(out, "user:  {line}")?;
        match engine::submit(&mut session, line) {
            Ok((_, events)) => {
                for ev in events.into_vec() {
                    render(&mut out, &ev)?;
                    log.push(ev);
                }
            }
            Err(e) => writeln!(out, "error: {e}")?,
        }
        if session.phase() == DialoguePhase::End {
            break;
        }
    }
    out.flush()?;
    Ok(log)
}
