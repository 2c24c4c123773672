//! Intent understanding: a vocabulary-grounded prompt, a backend call, and a
//! validated [`SlotSet`] parsed from the JSON reply.
//!
//! The prompt lists metadata values round-robin across categories, most
//! frequent first, and stops adding values at the first one that would push
//! the prompt past its [`PromptBudget`].

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::llm_backend::{Backend, BackendRequest, Purpose};
use crate::prompts::{self, NLU_TEMPLATE};
use crate::time::Micros;

/// Case-folds and trims a slot value and collapses inner whitespace, so
/// `" Ramen "` and `"ramen"` compare equal.
pub fn normalize_value(value: &str) -> String {
    value.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabValue {
    pub value: String,
    pub frequency: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryValues {
    pub name: String,
    pub values: Vec<VocabValue>,
}

/// Ordered metadata categories and their values with spot frequencies.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataVocabulary {
    categories: Vec<CategoryValues>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VocabularyError {
    #[error("duplicate category `{0}`")]
    DuplicateCategory(String),
    #[error("duplicate value `{value}` in category `{category}`")]
    DuplicateValue { category: String, value: String },
    #[error("value `{value}` in category `{category}` has frequency 0")]
    ZeroFrequency { category: String, value: String },
    #[error("invalid category name `{0}`")]
    InvalidCategory(String),
    #[error("invalid value `{value}` in category `{category}`")]
    InvalidValue { category: String, value: String },
}

pub(crate) fn valid_category_name(name: &str) -> bool {
    !name.trim().is_empty() && name.trim() == name && !name.contains([':', '\n', '\r'])
}

pub(crate) fn valid_value(value: &str) -> bool {
    !value.is_empty() && !value.contains(['|', '\n', '\r'])
}

impl MetadataVocabulary {
    /// Validates and builds a vocabulary. Values are normalized with
    /// [`normalize_value`].
    pub fn new(categories: Vec<CategoryValues>) -> Result<Self, VocabularyError> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(categories.len());
        for mut cat in categories {
            if !valid_category_name(&cat.name) {
                return Err(VocabularyError::InvalidCategory(cat.name));
            }
            if !seen.insert(cat.name.clone()) {
                return Err(VocabularyError::DuplicateCategory(cat.name));
            }
            let mut values_seen = HashSet::new();
            for v in &mut cat.values {
                v.value = normalize_value(&v.value);
                if !valid_value(&v.value) {
                    return Err(VocabularyError::InvalidValue {
                        category: cat.name.clone(),
                        value: v.value.clone(),
                    });
                }
                if v.frequency == 0 {
                    return Err(VocabularyError::ZeroFrequency {
                        category: cat.name.clone(),
                        value: v.value.clone(),
                    });
                }
                if !values_seen.insert(v.value.clone()) {
                    return Err(VocabularyError::DuplicateValue {
                        category: cat.name.clone(),
                        value: v.value.clone(),
                    });
                }
            }
            out.push(cat);
        }
        Ok(Self { categories: out })
    }

    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, Vec<(&'a str, u32)>)>,
    ) -> Result<Self, VocabularyError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, values)| CategoryValues {
                    name: name.to_string(),
                    values: values
                        .into_iter()
                        .map(|(v, f)| VocabValue {
                            value: v.to_string(),
                            frequency: f,
                        })
                        .collect(),
                })
                .collect(),
        )
    }

    pub fn categories(&self) -> &[CategoryValues] {
        &self.categories
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn value_count(&self) -> usize {
        self.categories.iter().map(|c| c.values.len()).sum()
    }

    pub fn category(&self, name: &str) -> Option<&CategoryValues> {
        self.categories.iter().find(|c| c.name == name)
    }

    /// Resolves a backend-produced `(category, value)` pair to the canonical
    /// vocabulary spelling. Category names match case-insensitively.
    pub fn resolve(&self, category: &str, value: &str) -> Option<(&str, &str)> {
        let category = category.trim();
        let cat = self
            .categories
            .iter()
            .find(|c| c.name == category)
            .or_else(|| self.categories.iter().find(|c| c.name.eq_ignore_ascii_case(category)))?;
        let value = normalize_value(value);
        cat.values
            .iter()
            .find(|v| v.value == value)
            .map(|v| (cat.name.as_str(), v.value.as_str()))
    }

    /// Values of each category sorted by descending frequency; ties keep
    /// vocabulary order.
    fn by_frequency(&self) -> Vec<(&str, Vec<&str>)> {
        self.categories
            .iter()
            .map(|c| {
                let mut vals: Vec<&VocabValue> = c.values.iter().collect();
                vals.sort_by_key(|v| std::cmp::Reverse(v.frequency));
                (c.name.as_str(), vals.into_iter().map(|v| v.value.as_str()).collect())
            })
            .collect()
    }
}

/// User-intent slots: category name to a set of normalized values.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotSet(BTreeMap<String, BTreeSet<String>>);

impl SlotSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a normalized value. Returns `true` if it was not present.
    pub fn insert(&mut self, category: &str, value: &str) -> bool {
        let value = normalize_value(value);
        let category = category.trim();
        if value.is_empty() || category.is_empty() {
            return false;
        }
        self.0.entry(category.to_string()).or_default().insert(value)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut s = Self::new();
        for (c, v) in pairs {
            s.insert(c, v);
        }
        s
    }

    pub fn get(&self, category: &str) -> Option<&BTreeSet<String>> {
        self.0.get(category)
    }

    pub fn contains(&self, category: &str, value: &str) -> bool {
        self.0.get(category).is_some_and(|s| s.contains(value))
    }

    pub fn has_category(&self, category: &str) -> bool {
        self.0.get(category).is_some_and(|s| !s.is_empty())
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(BTreeSet::is_empty)
    }

    /// Total number of values across categories.
    pub fn value_count(&self) -> usize {
        self.0.values().map(BTreeSet::len).sum()
    }

    pub fn categories(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.0.iter()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0
            .iter()
            .flat_map(|(c, vs)| vs.iter().map(move |v| (c.as_str(), v.as_str())))
    }

    pub fn union_with(&mut self, other: &SlotSet) {
        for (c, v) in other.iter() {
            self.insert(c, v);
        }
    }

    /// Whether every slot is a value of `vocab`.
    pub fn is_valid_for(&self, vocab: &MetadataVocabulary) -> bool {
        self.iter().all(|(c, v)| {
            vocab
                .category(c)
                .is_some_and(|cat| cat.values.iter().any(|x| x.value == v))
        })
    }

    /// Human-readable `Category: a, b; ...` rendering.
    pub fn describe(&self) -> String {
        if self.is_empty() {
            return "none yet".to_string();
        }
        self.0
            .iter()
            .filter(|(_, vs)| !vs.is_empty())
            .map(|(c, vs)| format!("{c}: {}", vs.iter().cloned().collect::<Vec<_>>().join(", ")))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Upper bound on NLU prompt length, in characters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBudget {
    pub max_chars: usize,
}

pub const DEFAULT_PROMPT_BUDGET: usize = 4000;

impl Default for PromptBudget {
    fn default() -> Self {
        Self {
            max_chars: DEFAULT_PROMPT_BUDGET,
        }
    }
}

impl PromptBudget {
    pub fn new(max_chars: usize) -> Result<Self, NluError> {
        let skeleton = skeleton_chars();
        if max_chars < skeleton {
            return Err(NluError::BudgetBelowSkeleton { max_chars, skeleton });
        }
        Ok(Self { max_chars })
    }
}

/// Length of the prompt template with every placeholder empty.
pub fn skeleton_chars() -> usize {
    prompts::render(NLU_TEMPLATE, &[("vocabulary", ""), ("user_text", "")])
        .chars()
        .count()
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NluError {
    #[error("prompt budget of {max_chars} chars cannot hold the skeleton plus one value per category ({required} chars needed)")]
    BudgetTooSmall { required: usize, max_chars: usize },
    #[error("prompt budget of {max_chars} chars is below the {skeleton}-char template skeleton")]
    BudgetBelowSkeleton { max_chars: usize, skeleton: usize },
    #[error("backend reply is not JSON: {raw:?}")]
    Parse { raw: String },
    #[error("backend reply does not match the slot schema: {message}")]
    Schema { message: String },
}

const LINE_PREFIX: &str = "- ";
const FIRST_SEP: &str = " ";
const VALUE_SEP: &str = " | ";
const VOCAB_HEADER: &str = "\nVocabulary:\n";
const UTTERANCE_HEADER: &str = "\nUtterance:\n";

fn chars(s: &str) -> usize {
    s.chars().count()
}

/// The sub-vocabulary that fits in `budget` once `user_text` is embedded.
pub fn truncate_vocabulary(
    vocab: &MetadataVocabulary,
    user_text: &str,
    budget: &PromptBudget,
) -> Result<MetadataVocabulary, NluError> {
    let ordered = vocab.by_frequency();
    let fixed = chars(&prompts::render(
        NLU_TEMPLATE,
        &[("vocabulary", ""), ("user_text", user_text)],
    ));
    let headers: usize = ordered
        .iter()
        .map(|(name, _)| chars(LINE_PREFIX) + chars(name) + 1)
        .sum::<usize>()
        + ordered.len().saturating_sub(1);
    let firsts: usize = ordered
        .iter()
        .filter_map(|(_, vals)| vals.first())
        .map(|v| chars(FIRST_SEP) + chars(v))
        .sum();
    let required = fixed + headers + firsts;
    if required > budget.max_chars {
        return Err(NluError::BudgetTooSmall {
            required,
            max_chars: budget.max_chars,
        });
    }

    let mut taken: Vec<usize> = ordered.iter().map(|(_, v)| v.len().min(1)).collect();
    let mut used = required;
    let rounds = ordered.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    'fill: for round in 1..rounds {
        for (i, (_, vals)) in ordered.iter().enumerate() {
            let Some(v) = vals.get(round) else { continue };
            let cost = chars(VALUE_SEP) + chars(v);
            if used + cost > budget.max_chars {
                break 'fill;
            }
            used += cost;
            taken[i] += 1;
        }
    }

    let categories = ordered
        .iter()
        .zip(&taken)
        .map(|((name, vals), &n)| {
            let source = vocab.category(name).expect("category from this vocabulary");
            CategoryValues {
                name: name.to_string(),
                values: vals[..n]
                    .iter()
                    .map(|v| {
                        source
                            .values
                            .iter()
                            .find(|x| x.value == *v)
                            .cloned()
                            .expect("value from this vocabulary")
                    })
                    .collect(),
            }
        })
        .collect();
    Ok(MetadataVocabulary { categories })
}

fn render_vocabulary(vocab: &MetadataVocabulary) -> String {
    vocab
        .categories
        .iter()
        .map(|c| {
            let mut line = format!("{LINE_PREFIX}{}:", c.name);
            for (i, v) in c.values.iter().enumerate() {
                line.push_str(if i == 0 { FIRST_SEP } else { VALUE_SEP });
                line.push_str(&v.value);
            }
            line
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Builds the NLU prompt for `user_text`, truncating the vocabulary to fit
/// `budget`. Deterministic for fixed inputs.
pub fn build_nlu_prompt(
    vocab: &MetadataVocabulary,
    user_text: &str,
    budget: &PromptBudget,
) -> Result<String, NluError> {
    let kept = truncate_vocabulary(vocab, user_text, budget)?;
    let prompt = prompts::render(
        NLU_TEMPLATE,
        &[("vocabulary", &render_vocabulary(&kept)), ("user_text", user_text)],
    );
    debug_assert!(chars(&prompt) <= budget.max_chars);
    Ok(prompt)
}

/// Vocabulary and utterance recovered from an NLU prompt.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptVocabulary {
    pub categories: Vec<(String, Vec<String>)>,
    pub user_text: String,
}

/// Reads the vocabulary block and utterance back out of a prompt produced by
/// [`build_nlu_prompt`].
pub fn parse_prompt_vocabulary(prompt: &str) -> Option<PromptVocabulary> {
    let start = prompt.find(VOCAB_HEADER)? + VOCAB_HEADER.len();
    let after = &prompt[start..];
    let split = if after.starts_with(&UTTERANCE_HEADER[1..]) {
        // empty vocabulary block
        (0, UTTERANCE_HEADER.len() - 1)
    } else {
        (after.find(UTTERANCE_HEADER)?, UTTERANCE_HEADER.len())
    };
    let block = &after[..split.0];
    let user_text = after[split.0 + split.1..].to_string();
    let categories = block
        .lines()
        .filter_map(|line| {
            let body = line.strip_prefix(LINE_PREFIX)?;
            let (name, values) = body.split_once(':')?;
            let values = values
                .split(VALUE_SEP.trim())
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .map(str::to_string)
                .collect();
            Some((name.to_string(), values))
        })
        .collect();
    Some(PromptVocabulary { categories, user_text })
}

/// One slot on the wire.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireSlot {
    pub category: String,
    pub value: String,
}

/// The slot wire schema: `{"slots":[{"category":..,"value":..}, ..]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireSlots {
    pub slots: Vec<WireSlot>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedSlots {
    pub slots: SlotSet,
    /// Wire slots dropped because they are not in the vocabulary.
    pub dropped: usize,
}

fn strip_code_fence(raw: &str) -> &str {
    let t = raw.trim();
    match t.strip_prefix("```") {
        Some(rest) => {
            let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphabetic());
            rest.strip_suffix("```").unwrap_or(rest).trim()
        }
        None => t,
    }
}

/// Parses a backend reply against the wire schema, keeping only
/// vocabulary-valid slots.
pub fn parse_slot_response(raw: &str, vocab: &MetadataVocabulary) -> Result<ParsedSlots, NluError> {
    let value: serde_json::Value =
        serde_json::from_str(strip_code_fence(raw)).map_err(|_| NluError::Parse { raw: raw.to_string() })?;
    let wire: WireSlots = serde_json::from_value(value).map_err(|e| NluError::Schema { message: e.to_string() })?;
    let mut parsed = ParsedSlots::default();
    for slot in wire.slots {
        match vocab.resolve(&slot.category, &slot.value) {
            Some((c, v)) => {
                parsed.slots.insert(c, v);
            }
            None => parsed.dropped += 1,
        }
    }
    Ok(parsed)
}

/// Outcome of [`extract_slots`]. A degraded extraction carries an empty slot
/// set and the reason.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extraction {
    pub slots: SlotSet,
    pub dropped: usize,
    /// Backend calls made: 1, or 2 after a retry.
    pub attempts: u32,
    pub degraded: bool,
    pub failure: Option<String>,
    /// Sum of the injected latency of every attempt.
    pub latency: Micros,
}

impl Extraction {
    pub fn retries(&self) -> u32 {
        self.attempts.saturating_sub(1)
    }
}

/// Identifies the session turn an extraction belongs to.
#[derive(Clone, Copy, Debug)]
pub struct NluContext<'a> {
    pub session_id: &'a str,
    pub turn_id: u64,
}

/// Runs one understanding step. Never fails: an unusable reply is retried
/// once with the same prompt, and a second failure yields a degraded empty
/// result.
pub fn extract_slots(
    user_text: &str,
    vocab: &MetadataVocabulary,
    backend: &dyn Backend,
    budget: &PromptBudget,
    ctx: NluContext<'_>,
) -> Extraction {
    let mut out = Extraction {
        slots: SlotSet::new(),
        dropped: 0,
        attempts: 0,
        degraded: true,
        failure: None,
        latency: Micros::ZERO,
    };
    let prompt = match build_nlu_prompt(vocab, user_text, budget) {
        Ok(p) => p,
        Err(e) => {
            out.failure = Some(e.to_string());
            return out;
        }
    };
    let request = BackendRequest {
        purpose: Purpose::Nlu,
        prompt,
        session_id: ctx.session_id.to_string(),
        turn_id: ctx.turn_id,
    };
    while out.attempts < 2 {
        out.attempts += 1;
        let result = backend.complete(&request).map_err(|e| e.to_string()).and_then(|resp| {
            out.latency += resp.latency_injected;
            parse_slot_response(&resp.text, vocab).map_err(|e| e.to_string())
        });
        match result {
            Ok(parsed) => {
                out.slots = parsed.slots;
                out.dropped = parsed.dropped;
                out.degraded = false;
                out.failure = None;
                return out;
            }
            Err(e) => out.failure = Some(e),
        }
    }
    out
}
