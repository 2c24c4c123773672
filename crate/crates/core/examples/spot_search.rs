//! Ranks the bundled Kyoto catalog against a set of preferences.

use std::collections::HashSet;

use asyncmld::dst_store::{merge_slots, DstState};
use asyncmld::nlu::SlotSet;
use asyncmld::rtdb::{bundled_catalog, search};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let catalog = bundled_catalog();
    let prefs = SlotSet::from_pairs([("Seeing", "temple"), ("Seeing", "garden"), ("Eating", "tofu")]);
    let dst = merge_slots(&DstState::empty("demo"), &prefs, 0)?;
    println!("preferences: {}", dst.slots.describe());
    let ranked = search(&catalog, &dst, 6, &HashSet::new());
    for e in &ranked.entries {
        let spot = catalog.get(&e.spot_id).expect("ranked ids come from the catalog");
        println!("{}  score {}  {}", e.spot_id, e.score, spot.name);
    }
    Ok(())
}
