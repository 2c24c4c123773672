//! Slow understanding: path B takes 10 s, the barrier gives up after 2 s and
//! the turn goes ahead on the previous DST version.

use asyncmld::orchestrator::PipelineMode;
use asyncmld::sim_harness::{simulate, PersonaScript, SimEnv};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = PersonaScript::from_toml_str(include_str!("../personas/kyoto_slow_nlu.toml"))?;
    let run = simulate(&script, PipelineMode::Async, &SimEnv::default())?;
    println!("turn  gap     wait    stale  dst_version_used");
    for (gap, trace) in run.report.per_turn.iter().zip(&run.traces) {
        println!(
            "{:>4}  {}  {}  {:<5}  {}",
            gap.turn_id, gap.perceived_gap, gap.barrier_wait, gap.stale, trace.dst_version_used
        );
    }
    Ok(())
}
