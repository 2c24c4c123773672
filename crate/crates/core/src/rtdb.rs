//! Recommend-target database: the spot catalog and slot-overlap ranking.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::dst_store::DstState;
use crate::nlu::{self, CategoryValues, MetadataVocabulary, SlotSet, VocabValue};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Location {
    pub lat: f64,
    pub lon: f64,
}

/// A recommendable spot. One catalog line deserializes into one record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotRecord {
    pub spot_id: String,
    pub name: String,
    pub description: String,
    pub metadata: IndexMap<String, BTreeSet<String>>,
    pub location: Location,
}

impl SpotRecord {
    pub fn metadata_value_count(&self) -> usize {
        self.metadata.values().map(BTreeSet::len).sum()
    }

    /// Metadata values that also appear in `slots`.
    pub fn matched(&self, slots: &SlotSet) -> SlotSet {
        let mut out = SlotSet::new();
        for (cat, values) in &self.metadata {
            for v in values {
                if slots.contains(cat, v) {
                    out.insert(cat, v);
                }
            }
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("catalog line {line}: duplicate spot_id `{spot_id}`")]
    DuplicateId { line: usize, spot_id: String },
    #[error("catalog line {line}: spot `{spot_id}` has an invalid location")]
    InvalidLocation { line: usize, spot_id: String },
    #[error("catalog line {line}: spot `{spot_id}`: {message}")]
    InvalidRecord {
        line: usize,
        spot_id: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable spot catalog with its derived vocabulary.
#[derive(Clone, Debug, Default)]
pub struct SpotCatalog {
    spots: Vec<SpotRecord>,
    index: HashMap<String, usize>,
    vocabulary: MetadataVocabulary,
}

fn normalize_record(mut rec: SpotRecord, line: usize) -> Result<SpotRecord, CatalogError> {
    let invalid = |message: String| CatalogError::InvalidRecord {
        line,
        spot_id: rec.spot_id.clone(),
        message,
    };
    if rec.spot_id.trim().is_empty() {
        return Err(invalid("empty spot_id".into()));
    }
    if rec.name.trim().is_empty() {
        return Err(invalid("empty name".into()));
    }
    let loc = rec.location;
    if !(loc.lat.is_finite()
        && loc.lon.is_finite()
        && (-90.0..=90.0).contains(&loc.lat)
        && (-180.0..=180.0).contains(&loc.lon))
    {
        return Err(CatalogError::InvalidLocation {
            line,
            spot_id: rec.spot_id.clone(),
        });
    }
    let mut metadata = IndexMap::with_capacity(rec.metadata.len());
    for (cat, values) in &rec.metadata {
        if !nlu::valid_category_name(cat) {
            return Err(invalid(format!("invalid category name `{cat}`")));
        }
        let mut normalized = BTreeSet::new();
        for v in values {
            let n = nlu::normalize_value(v);
            if !nlu::valid_value(&n) {
                return Err(invalid(format!("invalid value `{v}` in `{cat}`")));
            }
            normalized.insert(n);
        }
        metadata.insert(cat.clone(), normalized);
    }
    rec.metadata = metadata;
    Ok(rec)
}

impl SpotCatalog {
    /// Builds a catalog from already-parsed records.
    pub fn from_records(records: impl IntoIterator<Item = SpotRecord>) -> Result<Self, CatalogError> {
        let mut spots = Vec::new();
        let mut index = HashMap::new();
        for (i, rec) in records.into_iter().enumerate() {
            let rec = normalize_record(rec, i + 1)?;
            if index.contains_key(&rec.spot_id) {
                return Err(CatalogError::DuplicateId {
                    line: i + 1,
                    spot_id: rec.spot_id,
                });
            }
            index.insert(rec.spot_id.clone(), spots.len());
            spots.push(rec);
        }
        let vocabulary = derive_vocabulary(&spots);
        Ok(Self {
            spots,
            index,
            vocabulary,
        })
    }

    pub fn spots(&self) -> &[SpotRecord] {
        &self.spots
    }

    pub fn len(&self) -> usize {
        self.spots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spots.is_empty()
    }

    pub fn get(&self, spot_id: &str) -> Option<&SpotRecord> {
        self.index.get(spot_id).map(|&i| &self.spots[i])
    }

    pub fn vocabulary(&self) -> &MetadataVocabulary {
        &self.vocabulary
    }
}

// Categories in order of first appearance; values by descending frequency,
// then alphabetically.
fn derive_vocabulary(spots: &[SpotRecord]) -> MetadataVocabulary {
    let mut counts: IndexMap<&str, BTreeMap<&str, u32>> = IndexMap::new();
    for spot in spots {
        for (cat, values) in &spot.metadata {
            let entry = counts.entry(cat.as_str()).or_default();
            for v in values {
                *entry.entry(v.as_str()).or_default() += 1;
            }
        }
    }
    let categories = counts
        .into_iter()
        .map(|(name, values)| {
            let mut values: Vec<VocabValue> = values
                .into_iter()
                .map(|(v, f)| VocabValue {
                    value: v.to_string(),
                    frequency: f,
                })
                .collect();
            values.sort_by(|a, b| b.frequency.cmp(&a.frequency).then_with(|| a.value.cmp(&b.value)));
            CategoryValues {
                name: name.to_string(),
                values,
            }
        })
        .collect();
    MetadataVocabulary::new(categories).expect("catalog metadata already validated")
}

/// Reads a line-delimited catalog. Blank lines are skipped; every other line
/// must be a complete [`SpotRecord`] with no extra fields.
pub fn ingest_catalog(reader: impl BufRead) -> Result<SpotCatalog, CatalogError> {
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SpotRecord = serde_json::from_str(&line).map_err(|e| CatalogError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
        lines.push(idx + 1);
    }
    // from_records numbers records, not file lines; remap for messages
    SpotCatalog::from_records(records).map_err(|e| match e {
        CatalogError::DuplicateId { line, spot_id } => CatalogError::DuplicateId {
            line: lines[line - 1],
            spot_id,
        },
        CatalogError::InvalidLocation { line, spot_id } => CatalogError::InvalidLocation {
            line: lines[line - 1],
            spot_id,
        },
        CatalogError::InvalidRecord { line, spot_id, message } => CatalogError::InvalidRecord {
            line: lines[line - 1],
            spot_id,
            message,
        },
        other => other,
    })
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<SpotCatalog, CatalogError> {
    let file = std::fs::File::open(path)?;
    ingest_catalog(std::io::BufReader::new(file))
}

/// The 120-spot Kyoto catalog bundled with the crate.
pub const BUNDLED_CATALOG: &str = include_str!("../data/kyoto_spots.jsonl");

pub fn bundled_catalog() -> SpotCatalog {
    ingest_catalog(BUNDLED_CATALOG.as_bytes()).expect("bundled catalog is valid")
}

/// Per-category weights for [`score_spot_weighted`]. Unlisted categories
/// weigh 1.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreWeights(pub BTreeMap<String, u32>);

impl ScoreWeights {
    pub fn weight(&self, category: &str) -> u32 {
        self.0.get(category).copied().unwrap_or(1)
    }
}

/// Number of metadata values the spot shares with the slots, summed over
/// categories.
pub fn score_spot(spot: &SpotRecord, slots: &SlotSet) -> u32 {
    score_spot_weighted(spot, slots, &ScoreWeights::default())
}

pub fn score_spot_weighted(spot: &SpotRecord, slots: &SlotSet, weights: &ScoreWeights) -> u32 {
    spot.metadata
        .iter()
        .filter_map(|(cat, values)| {
            let wanted = slots.get(cat)?;
            let overlap = values.intersection(wanted).count() as u32;
            Some(overlap * weights.weight(cat))
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub spot_id: String,
    pub score: u32,
}

/// Search result: score descending, ties by ascending `spot_id`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedSpots {
    pub entries: Vec<RankedEntry>,
    pub dst_version: u64,
}

impl RankedSpots {
    /// Entries with a positive score.
    pub fn positive(&self) -> impl Iterator<Item = &RankedEntry> {
        self.entries.iter().filter(|e| e.score > 0)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.spot_id.as_str()).collect()
    }
}

/// Top-`k` spots for the DST, skipping `exclude`. Keeps a bounded heap of
/// the `k` best candidates seen so far.
pub fn search(catalog: &SpotCatalog, dst: &DstState, k: usize, exclude: &HashSet<String>) -> RankedSpots {
    search_weighted(catalog, dst, k, exclude, &ScoreWeights::default())
}

pub fn search_weighted(
    catalog: &SpotCatalog,
    dst: &DstState,
    k: usize,
    exclude: &HashSet<String>,
    weights: &ScoreWeights,
) -> RankedSpots {
    // max-heap keyed so the worst kept candidate (lowest score, then
    // highest id) sits on top
    let mut heap: BinaryHeap<(Reverse<u32>, &str)> = BinaryHeap::with_capacity(k + 1);
    if k > 0 {
        for spot in catalog.spots() {
            if exclude.contains(&spot.spot_id) {
                continue;
            }
            let score = score_spot_weighted(spot, &dst.slots, weights);
            heap.push((Reverse(score), spot.spot_id.as_str()));
            if heap.len() > k {
                heap.pop();
            }
        }
    }
    let entries = heap
        .into_sorted_vec()
        .into_iter()
        .map(|(Reverse(score), id)| RankedEntry {
            spot_id: id.to_string(),
            score,
        })
        .collect();
    RankedSpots {
        entries,
        dst_version: dst.version,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spot(id: &str, md: &[(&str, &[&str])]) -> SpotRecord {
        SpotRecord {
            spot_id: id.into(),
            name: format!("Spot {id}"),
            description: String::new(),
            metadata: md
                .iter()
                .map(|(c, vs)| (c.to_string(), vs.iter().map(|v| v.to_string()).collect()))
                .collect(),
            location: Location { lat: 35.0, lon: 135.0 },
        }
    }

    fn dst(pairs: &[(&str, &str)]) -> DstState {
        let mut d = DstState::empty("s");
        d.slots = SlotSet::from_pairs(pairs.iter().copied());
        d
    }

    #[test]
    fn scoring() {
        let s = spot("a", &[("Seeing", &["temple", "garden"])]);
        assert_eq!(score_spot(&s, &SlotSet::new()), 0);
        assert_eq!(score_spot(&s, &dst(&[("Seeing", "temple")]).slots), 1);
        let full = dst(&[("Seeing", "temple"), ("Seeing", "garden"), ("Eating", "tofu")]);
        assert_eq!(score_spot(&s, &full.slots), s.metadata_value_count() as u32);
        let mut w = ScoreWeights::default();
        w.0.insert("Seeing".into(), 3);
        assert_eq!(score_spot_weighted(&s, &full.slots, &w), 6);
    }

    #[test]
    fn ties_break_by_ascending_id_and_excludes_apply() {
        let cat = SpotCatalog::from_records([
            spot("c", &[("Seeing", &["temple"])]),
            spot("a", &[("Seeing", &["temple"])]),
            spot("b", &[("Seeing", &["shrine"])]),
        ])
        .unwrap();
        let d = dst(&[("Seeing", "temple")]);
        let r = search(&cat, &d, 3, &HashSet::new());
        assert_eq!(r.ids(), vec!["a", "c", "b"]);
        assert_eq!(r.entries[2].score, 0);
        let r = search(&cat, &d, 1, &HashSet::from(["a".to_string()]));
        assert_eq!(r.ids(), vec!["c"]);
        let all: HashSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert!(search(&cat, &d, 4, &all).entries.is_empty());
        assert!(search(&cat, &d, 0, &HashSet::new()).entries.is_empty());
    }

    #[test]
    fn ingest_rejects_duplicates_and_unknown_fields() {
        let line = |id: &str| {
            format!(
                r#"{{"spot_id":"{id}","name":"N","description":"","metadata":{{"Seeing":["temple"]}},"location":{{"lat":35.0,"lon":135.0}}}}"#
            )
        };
        let dup = format!("{}\n\n{}\n", line("x"), line("x"));
        match ingest_catalog(dup.as_bytes()) {
            Err(CatalogError::DuplicateId { line, spot_id }) => {
                assert_eq!(spot_id, "x");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
        let extra = line("x").replace("\"name\"", "\"rating\":5,\"name\"");
        assert!(matches!(
            ingest_catalog(extra.as_bytes()),
            Err(CatalogError::Parse { line: 1, .. })
        ));
        let bad_loc = line("x").replace("35.0", "95.0");
        assert!(matches!(
            ingest_catalog(bad_loc.as_bytes()),
            Err(CatalogError::InvalidLocation { .. })
        ));
        let empty = ingest_catalog("".as_bytes()).unwrap();
        assert!(empty.is_empty());
        assert!(empty.vocabulary().is_empty());
    }

    #[test]
    fn ingest_normalizes_metadata_values() {
        let cat = SpotCatalog::from_records([spot("a", &[("Eating", &[" Ramen", "ramen "])])]).unwrap();
        let s = cat.get("a").unwrap();
        assert_eq!(s.metadata["Eating"].iter().collect::<Vec<_>>(), vec!["ramen"]);
    }

    #[test]
    fn bundled_catalog_has_120_spots() {
        let c = bundled_catalog();
        assert_eq!(c.len(), 120);
        let names: Vec<&str> = c.vocabulary().categories().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["Playing", "Seeing", "Eating", "Shopping", "Area"]);
    }
}
