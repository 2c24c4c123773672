//! Commits slots for two sessions, writes the store to disk and loads it
//! back.

use asyncmld::dst_store::DstStore;
use asyncmld::nlu::SlotSet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let store = DstStore::new();
    store.create_session("alice")?;
    store.create_session("bob")?;
    store.commit("alice", &SlotSet::from_pairs([("Seeing", "temple")]), 0)?;
    store.commit(
        "alice",
        &SlotSet::from_pairs([("Eating", "Tofu"), ("Seeing", "temple")]),
        1,
    )?;
    store.commit("bob", &SlotSet::from_pairs([("Shopping", "ceramics")]), 0)?;

    let dir = std::env::temp_dir().join(format!("asyncmld-dst-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("dst.jsonl");
    store.persist(&path)?;
    print!("{}", std::fs::read_to_string(&path)?);

    let loaded = DstStore::load(&path)?;
    assert_eq!(loaded, store);
    let alice = loaded.get_snapshot("alice", None)?;
    println!("alice v{}: {}", alice.version, alice.slots.describe());
    let first = loaded.get_snapshot("alice", Some(1))?;
    println!("alice v1: {}", first.slots.describe());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
