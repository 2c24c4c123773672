//! Full travel-agency dialogue on the mock backend: recommendation, choice
//! of two spots, route and Q&A. Prints the transcript and the plan.

use asyncmld::orchestrator::{PipelineMode, Speaker};
use asyncmld::sim_harness::{simulate, PersonaScript, SimEnv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = PersonaScript::from_toml_str(include_str!("../personas/kyoto_fixed.toml"))?;
    let env = SimEnv::default();
    let run = simulate(&script, PipelineMode::Async, &env)?;
    for u in &run.transcript {
        let who = match u.speaker {
            Speaker::User => "user ",
            Speaker::System => "robot",
        };
        println!("[{}] {who}: {}", u.turn_id, u.text);
    }
    println!();
    println!("phases: {:?}", run.scenario.phase_log());
    println!("chosen: {:?}", run.scenario.chosen());
    println!("plan:   {}", run.scenario.summarize_plan(&env.catalog)?);
    Ok(())
}
