//! Drives a session with canned replies instead of an LLM. Any backend
//! implementing `Backend` can be swapped in the same way.

use std::sync::Arc;

use asyncmld::dst_store::DstStore;
use asyncmld::llm_backend::{MockBackend, ScriptedBackend};
use asyncmld::orchestrator::{EngineConfig, Session, SessionDeps};
use asyncmld::rtdb::bundled_catalog;
use asyncmld::scenario::MockRouteProvider;

const SCRIPT: &str = r#"{"session_id":"*","purpose":"respond","text":"Hi there! Where would you like to go?"}
{"session_id":"*","purpose":"respond","text":"Temples it is. Anything to eat?"}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let deps = SessionDeps {
        catalog: Arc::new(bundled_catalog()),
        store: Arc::new(DstStore::new()),
        responder: Arc::new(ScriptedBackend::from_reader(SCRIPT.as_bytes())?),
        understander: Arc::new(MockBackend),
        routes: Arc::new(MockRouteProvider),
    };
    let mut session = Session::new("demo", deps, EngineConfig::default())?;
    for text in ["Hello", "I like temples"] {
        let out = session.run_turn(text)?;
        println!("user:  {text}\nrobot: {}", out.system.text);
    }
    match session.run_turn("And tofu") {
        Ok(_) => println!("unexpected reply"),
        Err(e) => println!("script exhausted: {e}"),
    }
    println!("state: {}", session.latest_state()?.slots.describe());
    Ok(())
}
