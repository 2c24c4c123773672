//! Runs the fixed-latency persona in async and sync mode and prints the
//! per-turn perceived gaps.

use asyncmld::sim_harness::{compare_modes, PersonaScript};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = PersonaScript::from_toml_str(include_str!("../personas/kyoto_fixed.toml"))?;
    let report = compare_modes(&script)?;
    println!("turn  async   sync   delta");
    for d in &report.per_turn {
        println!("{:>4}  {}  {}  {}", d.turn_id, d.async_gap, d.sync_gap, d.delta);
    }
    println!(
        "mean  {}  {}  {}",
        report.async_report.mean_gap, report.sync_report.mean_gap, report.mean_delta
    );
    Ok(())
}
