//! Dialogue state tracker store.
//!
//! Each session keeps every committed version as an immutable
//! [`DstState`]; version `n` is the state after `n` commits and version 0 is
//! empty. Slots only accumulate.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::nlu::SlotSet;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub turn_id: u64,
    pub slots: SlotSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DstState {
    pub session_id: String,
    pub version: u64,
    pub slots: SlotSet,
    pub history: Vec<HistoryEntry>,
}

impl DstState {
    pub fn empty(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            version: 0,
            slots: SlotSet::new(),
            history: Vec::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DstError {
    #[error("turn {turn_id} already committed in session `{session_id}`")]
    DuplicateTurn { session_id: String, turn_id: u64 },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("session `{0}` already exists")]
    SessionExists(String),
    #[error("version {requested} requested but session `{session_id}` is at version {current}")]
    FutureVersion {
        session_id: String,
        requested: u64,
        current: u64,
    },
    #[error("DST file line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Folds `incoming` into `state`. The result's slots are the union of both;
/// its version is one higher.
pub fn merge_slots(state: &DstState, incoming: &SlotSet, turn_id: u64) -> Result<DstState, DstError> {
    if state.history.iter().any(|h| h.turn_id == turn_id) {
        return Err(DstError::DuplicateTurn {
            session_id: state.session_id.clone(),
            turn_id,
        });
    }
    let mut next = state.clone();
    next.slots.union_with(incoming);
    next.version += 1;
    // re-normalized copy, so history holds exactly what was merged
    let mut merged = SlotSet::new();
    merged.union_with(incoming);
    next.history.push(HistoryEntry { turn_id, slots: merged });
    Ok(next)
}

/// One line of the persistence file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    session_id: String,
    version: u64,
    turn_id: Option<u64>,
    slots: SlotSet,
}

type Versions = Vec<Arc<DstState>>;

/// Versioned per-session DST storage. One writer per session, any number of
/// readers; a reader sees either the version before a commit or after it.
#[derive(Debug, Default)]
pub struct DstStore {
    sessions: RwLock<BTreeMap<String, Versions>>,
}

impl DstStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_session(&self, session_id: &str) -> Result<Arc<DstState>, DstError> {
        let mut sessions = self.sessions.write().expect("dst lock poisoned");
        if sessions.contains_key(session_id) {
            return Err(DstError::SessionExists(session_id.to_string()));
        }
        let empty = Arc::new(DstState::empty(session_id));
        sessions.insert(session_id.to_string(), vec![empty.clone()]);
        Ok(empty)
    }

    pub fn contains(&self, session_id: &str) -> bool {
        self.sessions
            .read()
            .expect("dst lock poisoned")
            .contains_key(session_id)
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions
            .read()
            .expect("dst lock poisoned")
            .keys()
            .cloned()
            .collect()
    }

    pub fn commit(&self, session_id: &str, incoming: &SlotSet, turn_id: u64) -> Result<Arc<DstState>, DstError> {
        let mut sessions = self.sessions.write().expect("dst lock poisoned");
        let versions = sessions
            .get_mut(session_id)
            .ok_or_else(|| DstError::UnknownSession(session_id.to_string()))?;
        let latest = versions.last().expect("version 0 always present");
        let next = Arc::new(merge_slots(latest, incoming, turn_id)?);
        versions.push(next.clone());
        Ok(next)
    }

    /// The state at `at_version`, or the latest committed state.
    pub fn get_snapshot(&self, session_id: &str, at_version: Option<u64>) -> Result<Arc<DstState>, DstError> {
        let sessions = self.sessions.read().expect("dst lock poisoned");
        let versions = sessions
            .get(session_id)
            .ok_or_else(|| DstError::UnknownSession(session_id.to_string()))?;
        let current = versions.len() as u64 - 1;
        let v = at_version.unwrap_or(current);
        if v > current {
            return Err(DstError::FutureVersion {
                session_id: session_id.to_string(),
                requested: v,
                current,
            });
        }
        Ok(versions[v as usize].clone())
    }

    pub fn current_version(&self, session_id: &str) -> Result<u64, DstError> {
        Ok(self.get_snapshot(session_id, None)?.version)
    }

    /// Writes every session as line-delimited records, sessions in id order.
    pub fn write_to(&self, mut out: impl Write) -> Result<(), DstError> {
        let sessions = self.sessions.read().expect("dst lock poisoned");
        for (id, versions) in sessions.iter() {
            let header = Record {
                session_id: id.clone(),
                version: 0,
                turn_id: None,
                slots: SlotSet::new(),
            };
            writeln!(out, "{}", serde_json::to_string(&header).expect("record serializes"))?;
            for state in versions.iter().skip(1) {
                let entry = state.history.last().expect("committed state has history");
                let rec = Record {
                    session_id: id.clone(),
                    version: state.version,
                    turn_id: Some(entry.turn_id),
                    slots: entry.slots.clone(),
                };
                writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Persists to `path` through a temporary file and a rename.
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), DstError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Replays records in order. Any malformed, truncated or out-of-sequence
    /// line fails the whole load.
    pub fn read_from(input: impl Read) -> Result<Self, DstError> {
        let mut reader = BufReader::new(input);
        let mut sessions: BTreeMap<String, Versions> = BTreeMap::new();
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                break;
            }
            lineno += 1;
            let corrupt = |message: String| DstError::Corrupt { line: lineno, message };
            if !line.ends_with('\n') {
                return Err(corrupt("record is not newline-terminated (truncated file?)".into()));
            }
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if rec.version == 0 {
                if rec.turn_id.is_some() || !rec.slots.is_empty() {
                    return Err(corrupt("version 0 record must be empty".into()));
                }
                if sessions.contains_key(&rec.session_id) {
                    return Err(corrupt(format!("session `{}` declared twice", rec.session_id)));
                }
                let empty = Arc::new(DstState::empty(rec.session_id.clone()));
                sessions.insert(rec.session_id, vec![empty]);
                continue;
            }
            let versions = sessions
                .get_mut(&rec.session_id)
                .ok_or_else(|| corrupt(format!("commit for undeclared session `{}`", rec.session_id)))?;
            let latest = versions.last().expect("version 0 always present");
            if rec.version != latest.version + 1 {
                return Err(corrupt(format!(
                    "expected version {} for session `{}`, found {}",
                    latest.version + 1,
                    rec.session_id,
                    rec.version
                )));
            }
            let turn_id = rec
                .turn_id
                .ok_or_else(|| corrupt("commit record without turn_id".into()))?;
            let next = merge_slots(latest, &rec.slots, turn_id).map_err(|e| corrupt(e.to_string()))?;
            versions.push(Arc::new(next));
        }
        Ok(Self {
            sessions: RwLock::new(sessions),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DstError> {
        Self::read_from(File::open(path)?)
    }
}

impl PartialEq for DstStore {
    fn eq(&self, other: &Self) -> bool {
        if std::ptr::eq(self, other) {
            return true;
        }
        let a = self.sessions.read().expect("dst lock poisoned");
        let b = other.sessions.read().expect("dst lock poisoned");
        *a == *b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slots(pairs: &[(&str, &str)]) -> SlotSet {
        SlotSet::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn merge_into_empty() {
        let s = merge_slots(&DstState::empty("s"), &slots(&[("Eating", "ramen")]), 0).unwrap();
        assert_eq!(s.slots, slots(&[("Eating", "ramen")]));
        assert_eq!(s.version, 1);
        assert_eq!(s.history.len(), 1);
    }

    #[test]
    fn merge_is_idempotent_on_content() {
        let s1 = merge_slots(&DstState::empty("s"), &slots(&[("Seeing", "temple")]), 0).unwrap();
        let s2 = merge_slots(&s1, &slots(&[("Seeing", "temple")]), 1).unwrap();
        assert_eq!(s2.slots, s1.slots);
        assert_eq!(s2.version, 2);
    }

    #[test]
    fn merge_normalizes_values() {
        let s1 = merge_slots(&DstState::empty("s"), &slots(&[("Eating", "ramen")]), 0).unwrap();
        let mut raw = SlotSet::new();
        raw.insert("Eating", "Ramen ");
        let s2 = merge_slots(&s1, &raw, 1).unwrap();
        assert_eq!(s2.slots.value_count(), 1);
    }

    #[test]
    fn duplicate_turn_is_rejected() {
        let s1 = merge_slots(&DstState::empty("s"), &slots(&[("Eating", "ramen")]), 3).unwrap();
        assert!(matches!(
            merge_slots(&s1, &SlotSet::new(), 3),
            Err(DstError::DuplicateTurn { turn_id: 3, .. })
        ));
        let store = DstStore::new();
        store.create_session("s").unwrap();
        store.commit("s", &SlotSet::new(), 0).unwrap();
        assert!(store.commit("s", &slots(&[("A", "x")]), 0).is_err());
        assert_eq!(store.current_version("s").unwrap(), 1);
    }

    #[test]
    fn snapshots_by_version() {
        let store = DstStore::new();
        let fresh = store.create_session("s").unwrap();
        assert_eq!(fresh.version, 0);
        assert!(fresh.slots.is_empty());
        store.commit("s", &slots(&[("A", "x")]), 0).unwrap();
        store.commit("s", &slots(&[("B", "y")]), 1).unwrap();
        store.commit("s", &slots(&[("C", "z")]), 2).unwrap();
        let v2 = store.get_snapshot("s", Some(2)).unwrap();
        assert_eq!(v2.slots, slots(&[("A", "x"), ("B", "y")]));
        assert_eq!(store.get_snapshot("s", None).unwrap().version, 3);
        assert!(matches!(
            store.get_snapshot("s", Some(4)),
            Err(DstError::FutureVersion { .. })
        ));
        assert!(matches!(
            store.get_snapshot("nope", None),
            Err(DstError::UnknownSession(_))
        ));
        assert!(matches!(store.create_session("s"), Err(DstError::SessionExists(_))));
    }

    #[test]
    fn snapshot_is_isolated_from_later_commits() {
        let store = DstStore::new();
        store.create_session("s").unwrap();
        store.commit("s", &slots(&[("A", "x")]), 0).unwrap();
        let snap = store.get_snapshot("s", None).unwrap();
        let before = (*snap).clone();
        store.commit("s", &slots(&[("A", "y")]), 1).unwrap();
        assert_eq!(*snap, before);
    }

    #[test]
    fn empty_store_round_trip() {
        let mut buf = Vec::new();
        DstStore::new().write_to(&mut buf).unwrap();
        assert!(buf.is_empty());
        assert_eq!(DstStore::read_from(&buf[..]).unwrap(), DstStore::new());
    }

    #[test]
    fn corrupt_files_fail_cleanly() {
        let good = "{\"session_id\":\"s\",\"version\":0,\"turn_id\":null,\"slots\":{}}\n\
                    {\"session_id\":\"s\",\"version\":1,\"turn_id\":0,\"slots\":{\"A\":[\"x\"]}}\n";
        assert!(DstStore::read_from(good.as_bytes()).is_ok());
        let truncated = &good[..good.len() - 10];
        assert!(matches!(
            DstStore::read_from(truncated.as_bytes()),
            Err(DstError::Corrupt { line: 2, .. })
        ));
        let no_newline = &good[..good.len() - 1];
        assert!(matches!(
            DstStore::read_from(no_newline.as_bytes()),
            Err(DstError::Corrupt { line: 2, .. })
        ));
        let gap = good.replace("\"version\":1", "\"version\":2");
        assert!(matches!(
            DstStore::read_from(gap.as_bytes()),
            Err(DstError::Corrupt { .. })
        ));
        let orphan = "{\"session_id\":\"s\",\"version\":1,\"turn_id\":0,\"slots\":{}}\n";
        assert!(DstStore::read_from(orphan.as_bytes()).is_err());
        let extra = good.replace("\"slots\":{}", "\"slots\":{},\"x\":1");
        assert!(DstStore::read_from(extra.as_bytes()).is_err());
    }
}
