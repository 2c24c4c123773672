#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use asyncmld::dst_store::DstState;
use asyncmld::nlu::MetadataVocabulary;
use asyncmld::prompts::{render, NLU_TEMPLATE};
use asyncmld::rtdb::{Location, SpotCatalog, SpotRecord};
use indexmap::IndexMap;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CATEGORIES: [&str; 5] = ["Playing", "Seeing", "Eating", "Shopping", "Area"];

/// Catalog of `n` spots whose vocabulary grows with `n`: each category has
/// `values_per_category` values, each spot gets one to three per category.
pub fn synthetic_catalog(n: usize, values_per_category: usize, seed: u64) -> SpotCatalog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n).map(|i| {
        let mut metadata = IndexMap::new();
        for cat in CATEGORIES {
            let count = rng.random_range(1..=3usize);
            let values: BTreeSet<String> = (0..count)
                .map(|_| format!("{} {}", cat.to_lowercase(), rng.random_range(0..values_per_category)))
                .collect();
            metadata.insert(cat.to_string(), values);
        }
        SpotRecord {
            spot_id: format!("syn-{i:05}"),
            name: format!("Synthetic spot {i}"),
            description: format!("Spot number {i}."),
            metadata,
            location: Location {
                lat: 35.0 + rng.random_range(0.0..0.1),
                lon: 135.7 + rng.random_range(0.0..0.1),
            },
        }
    });
    SpotCatalog::from_records(records).expect("synthetic records are valid")
}

pub fn dst_with(slots: asyncmld::nlu::SlotSet) -> DstState {
    DstState {
        slots,
        ..DstState::empty("oracle")
    }
}

/// Score by brute force: matched values summed over categories.
pub fn oracle_score(spot: &SpotRecord, dst: &DstState) -> u32 {
    let mut score = 0;
    for (cat, values) in &spot.metadata {
        for v in values {
            if dst.slots.contains(cat, v) {
                score += 1;
            }
        }
    }
    score
}

/// Value frequency per category, for independent vocabulary checks.
pub fn value_frequencies(catalog: &SpotCatalog) -> BTreeMap<String, BTreeMap<String, u32>> {
    let mut out: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for spot in catalog.spots() {
        for (cat, values) in &spot.metadata {
            for v in values {
                *out.entry(cat.clone()).or_default().entry(v.clone()).or_default() += 1;
            }
        }
    }
    out
}

/// Round-robin oracle: a budget counter over the rendered vocabulary lines,
/// taking rank 0 of every category, then rank 1, and so on, stopping at the
/// first value that does not fit.
pub fn round_robin_oracle(vocab: &MetadataVocabulary, text: &str, max_chars: usize) -> Vec<(String, Vec<String>)> {
    let base = render(NLU_TEMPLATE, &[("vocabulary", ""), ("user_text", text)])
        .chars()
        .count();
    let cats: Vec<(String, Vec<String>)> = vocab
        .categories()
        .iter()
        .map(|c| {
            let mut vals: Vec<_> = c.values.iter().collect();
            vals.sort_by_key(|v| std::cmp::Reverse(v.frequency));
            (c.name.clone(), vals.into_iter().map(|v| v.value.clone()).collect())
        })
        .collect();
    let rendered_len = |kept: &[(String, Vec<String>)]| -> usize {
        let lines: Vec<String> = kept
            .iter()
            .map(|(name, vals)| format!("- {name}: {}", vals.join(" | ")))
            .collect();
        base + lines.join("\n").chars().count()
    };
    let mut kept: Vec<(String, Vec<String>)> = cats
        .iter()
        .map(|(n, v)| (n.clone(), v.iter().take(1).cloned().collect()))
        .collect();
    let rounds = cats.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for round in 1..rounds {
        for (i, (_, vals)) in cats.iter().enumerate() {
            let Some(v) = vals.get(round) else { continue };
            kept[i].1.push(v.clone());
            if rendered_len(&kept) > max_chars {
                kept[i].1.pop();
                return kept;
            }
        }
    }
    kept
}

pub fn survivors(vocab: &MetadataVocabulary) -> Vec<(String, Vec<String>)> {
    vocab
        .categories()
        .iter()
        .map(|c| (c.name.clone(), c.values.iter().map(|v| v.value.clone()).collect()))
        .collect()
}
