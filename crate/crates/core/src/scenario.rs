//! The travel-agency dialogue flow: welcome, recommend, choose two of four,
//! route, questions, close.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dst_store::DstState;
use crate::llm_backend::Purpose;
use crate::nlu::SlotSet;
use crate::rtdb::{Location, RankedSpots, SpotCatalog, SpotRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DialoguePhase {
    Welcome,
    Recommend,
    Choose,
    Route,
    Qa,
    End,
}

impl DialoguePhase {
    pub const ALL: [DialoguePhase; 6] = [
        DialoguePhase::Welcome,
        DialoguePhase::Recommend,
        DialoguePhase::Choose,
        DialoguePhase::Route,
        DialoguePhase::Qa,
        DialoguePhase::End,
    ];

    pub fn successor(self) -> Option<DialoguePhase> {
        let i = Self::ALL.iter().position(|p| *p == self)?;
        Self::ALL.get(i + 1).copied()
    }

    /// Whether `phases` walks Welcome..End in order without skips or reversals.
    pub fn is_valid_walk(phases: &[DialoguePhase]) -> bool {
        phases.iter().zip(Self::ALL.iter()).all(|(a, b)| a == b) && phases.len() <= Self::ALL.len()
    }
}

impl fmt::Display for DialoguePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TravelMode {
    Walk,
    Transit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteLeg {
    pub from_spot_id: String,
    pub to_spot_id: String,
    pub mode: TravelMode,
    pub distance_m: f64,
    pub duration_min: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub legs: Vec<RouteLeg>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("a route needs two different spots, got `{0}` twice")]
    SameSpot(String),
    #[error("route unavailable: {0}")]
    Unavailable(String),
}

/// Source of travel routes between two spots.
pub trait RouteProvider: Send + Sync {
    fn route(&self, from: &SpotRecord, to: &SpotRecord) -> Result<RoutePlan, RouteError>;
}

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const WALK_LIMIT_M: f64 = 2000.0;
pub const WALK_M_PER_MIN: f64 = 80.0;
pub const TRANSIT_M_PER_MIN: f64 = 400.0;
pub const TRANSIT_OVERHEAD_MIN: u32 = 5;

/// Great-circle distance in meters.
pub fn haversine_m(a: Location, b: Location) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Offline route provider: straight-line distance, walking up to 2 km at
/// 80 m/min, otherwise transit at 400 m/min plus a 5 minute overhead.
/// Durations round up to whole minutes, at least one.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockRouteProvider;

impl MockRouteProvider {
    pub fn leg(distance_m: f64) -> (TravelMode, u32) {
        if distance_m <= WALK_LIMIT_M {
            let mins = (distance_m / WALK_M_PER_MIN).ceil() as u32;
            (TravelMode::Walk, mins.max(1))
        } else {
            let mins = (distance_m / TRANSIT_M_PER_MIN).ceil() as u32 + TRANSIT_OVERHEAD_MIN;
            (TravelMode::Transit, mins)
        }
    }
}

impl RouteProvider for MockRouteProvider {
    fn route(&self, from: &SpotRecord, to: &SpotRecord) -> Result<RoutePlan, RouteError> {
        let distance_m = haversine_m(from.location, to.location);
        let (mode, duration_min) = Self::leg(distance_m);
        Ok(RoutePlan {
            legs: vec![RouteLeg {
                from_spot_id: from.spot_id.clone(),
                to_spot_id: to.spot_id.clone(),
                mode,
                distance_m,
                duration_min,
            }],
        })
    }
}

/// Asks `provider` for a route from `a` to `b`.
pub fn build_route(a: &SpotRecord, b: &SpotRecord, provider: &dyn RouteProvider) -> Result<RoutePlan, RouteError> {
    if a.spot_id == b.spot_id {
        return Err(RouteError::SameSpot(a.spot_id.clone()));
    }
    provider.route(a, b)
}

/// One sentence per leg, naming both spots, the mode and the duration.
pub fn describe_route(plan: &RoutePlan, catalog: &SpotCatalog) -> String {
    let name = |id: &str| {
        catalog
            .get(id)
            .map_or_else(|| "the next spot".to_string(), |s| s.name.clone())
    };
    plan.legs
        .iter()
        .map(|leg| {
            let (from, to) = (name(&leg.from_spot_id), name(&leg.to_spot_id));
            match leg.mode {
                TravelMode::Walk => format!("Walking from {from} to {to} takes about {} min.", leg.duration_min),
                TravelMode::Transit => format!(
                    "From {from} to {to}, public transit takes about {} min.",
                    leg.duration_min
                ),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn route_apology(names: &[String]) -> String {
    format!(
        "I'm sorry, I could not get route information between {} right now.",
        join_names(names)
    )
}

fn join_names(names: &[String]) -> String {
    match names {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// A presented spot, as shown to the user.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCard {
    pub spot_id: String,
    pub name: String,
    pub description: String,
    pub matched: SlotSet,
    pub score: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PlanOutcome {
    Planned(RoutePlan),
    Unavailable(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DialogueAction {
    Welcome,
    /// Ask about a category the DST does not cover yet.
    Elicit {
        category: Option<String>,
        examples: Vec<String>,
    },
    PresentCandidates {
        cards: Vec<CandidateCard>,
    },
    /// Re-prompt for a valid choice of two presented spots.
    RequestChoice {
        cards: Vec<CandidateCard>,
        problem: Option<String>,
    },
    PresentRoute {
        chosen: Vec<String>,
        plan: RoutePlan,
        summary: String,
    },
    RouteUnavailable {
        chosen: Vec<String>,
        summary: String,
    },
    Answer {
        question: String,
        plan_context: String,
        closing: bool,
    },
    Close {
        chosen: Vec<String>,
    },
}

impl DialogueAction {
    pub fn purpose(&self) -> Purpose {
        match self {
            DialogueAction::Answer { .. } => Purpose::Qa,
            _ => Purpose::Respond,
        }
    }

    /// Extra prompt context for the reply model.
    pub fn context(&self) -> String {
        match self {
            DialogueAction::PresentCandidates { cards } | DialogueAction::RequestChoice { cards, .. } => {
                let list = cards
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("{}. {}", i + 1, c.name))
                    .collect::<Vec<_>>()
                    .join("; ");
                format!("Candidates: {list}")
            }
            DialogueAction::Answer { plan_context, .. } => format!("Plan: {plan_context}"),
            DialogueAction::PresentRoute { summary, .. } | DialogueAction::RouteUnavailable { summary, .. } => {
                format!("Route: {summary}")
            }
            _ => String::new(),
        }
    }

    /// Template reply the model is asked to rephrase.
    pub fn draft(&self) -> String {
        match self {
            DialogueAction::Welcome => "Welcome to our travel agency! I can recommend sightseeing spots in Kyoto. \
                                        What would you like to do on your trip?"
                .to_string(),
            DialogueAction::Elicit {
                category: Some(cat),
                examples,
            } => {
                let mut s = format!("To find the right spots, tell me about {}.", cat.to_lowercase());
                if !examples.is_empty() {
                    s.push_str(&format!(" For example: {}?", examples.join(", ")));
                }
                s
            }
            DialogueAction::Elicit { category: None, .. } => {
                "I am still looking for the best matches. Is there anything else you would like to do?".to_string()
            }
            DialogueAction::PresentCandidates { cards } => {
                let mut s = format!("I have {} recommendations for you.", cards.len());
                for (i, c) in cards.iter().enumerate() {
                    s.push_str(&format!(" {}: {}. {}", i + 1, c.name, c.description));
                    let matched: Vec<&str> = c.matched.iter().map(|(_, v)| v).collect();
                    if !matched.is_empty() {
                        s.push_str(&format!(" It matches your interest in {}.", matched.join(" and ")));
                    }
                }
                s.push_str(" Please choose two of them.");
                s
            }
            DialogueAction::RequestChoice { cards, problem } => {
                let mut s = problem.as_ref().map(|p| format!("{p} ")).unwrap_or_default();
                let options = cards
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("{}: {}", i + 1, c.name))
                    .collect::<Vec<_>>();
                s.push_str(&format!(
                    "Please pick two of the spots by number, for example 1 and 3. The options are {}.",
                    join_names(&options)
                ));
                s
            }
            DialogueAction::PresentRoute { chosen, summary, .. }
            | DialogueAction::RouteUnavailable { chosen, summary } => format!(
                "Great choice: {}. {summary} Feel free to ask me anything about your plan.",
                join_names(chosen)
            ),
            DialogueAction::Answer {
                plan_context, closing, ..
            } => {
                let mut s = format!("Here is what I can tell you about your plan. {plan_context}");
                if *closing {
                    s.push_str(" Thank you for visiting, and enjoy your trip. Goodbye!");
                }
                s
            }
            DialogueAction::Close { chosen } => format!(
                "Thank you for visiting. Enjoy {}. Goodbye!",
                if chosen.is_empty() {
                    "Kyoto".to_string()
                } else {
                    join_names(chosen)
                }
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChoiceError {
    #[error("choices can only be made while choosing (current phase: {0})")]
    WrongPhase(DialoguePhase),
    #[error("please choose exactly {expected} spots; I heard {got}.")]
    WrongCount { expected: usize, got: usize },
    #[error("you picked the same spot twice.")]
    Duplicate(String),
    #[error("{0} is not one of the options.")]
    NotPresented(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("the dialogue has ended")]
    Ended,
    #[error("operation not available in phase {0}")]
    WrongPhase(DialoguePhase),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Spots presented for choosing.
    pub candidates: usize,
    /// Spots the user must choose.
    pub choose: usize,
    /// Minimum score for a spot to count as a candidate.
    pub min_score: u32,
    /// Questions answered before the dialogue closes on its own.
    pub max_qa_turns: u32,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            candidates: 4,
            choose: 2,
            min_score: 1,
            max_qa_turns: 3,
        }
    }
}

pub struct ScenarioContext<'a> {
    pub catalog: &'a SpotCatalog,
    pub routes: &'a dyn RouteProvider,
    pub config: &'a ScenarioConfig,
}

/// Session-local scenario state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioState {
    phase: DialoguePhase,
    presented: Vec<CandidateCard>,
    chosen: Vec<String>,
    plan: Option<PlanOutcome>,
    qa_turns: u32,
    phase_log: Vec<DialoguePhase>,
}

impl Default for ScenarioState {
    fn default() -> Self {
        Self::new()
    }
}

const NUMBER_WORDS: [(&str, usize); 16] = [
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("first", 1),
    ("second", 2),
    ("third", 3),
    ("fourth", 4),
    ("fifth", 5),
    ("1st", 1),
    ("2nd", 2),
    ("3rd", 3),
    ("4th", 4),
    ("5th", 5),
];

/// A spot reference parsed from user text: a presented spot id, or the raw
/// token that did not resolve to one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selection {
    Spot(String),
    Unknown(String),
}

/// Reads spot references from free text: ordinals ("1 and 3", "the first
/// and third") against presentation order, or else spot names.
pub fn parse_selection(text: &str, presented: &[CandidateCard]) -> Vec<Selection> {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    let numbers: Vec<(usize, &str)> = tokens
        .iter()
        .filter_map(|t| {
            t.parse::<usize>()
                .ok()
                .or_else(|| NUMBER_WORDS.iter().find(|(w, _)| w == t).map(|(_, n)| *n))
                .map(|n| (n, *t))
        })
        .collect();
    if !numbers.is_empty() {
        return numbers
            .into_iter()
            .map(|(n, raw)| match n.checked_sub(1).and_then(|i| presented.get(i)) {
                Some(card) => Selection::Spot(card.spot_id.clone()),
                None => Selection::Unknown(raw.to_string()),
            })
            .collect();
    }
    let mut hits: Vec<(usize, &CandidateCard)> = presented
        .iter()
        .filter_map(|c| lower.find(&c.name.to_lowercase()).map(|pos| (pos, c)))
        .collect();
    hits.sort_by_key(|(pos, _)| *pos);
    hits.into_iter()
        .map(|(_, c)| Selection::Spot(c.spot_id.clone()))
        .collect()
}

/// Whether the user is wrapping up the conversation.
pub fn is_closing(text: &str) -> bool {
    let lower = text.to_lowercase();
    let tokens: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|t| !t.is_empty())
        .collect();
    tokens.iter().any(|t| matches!(*t, "bye" | "goodbye" | "thanks"))
        || lower.contains("thank you")
        || lower.contains("that's all")
        || lower.contains("that is all")
}

impl ScenarioState {
    pub fn new() -> Self {
        Self {
            phase: DialoguePhase::Welcome,
            presented: Vec::new(),
            chosen: Vec::new(),
            plan: None,
            qa_turns: 0,
            phase_log: vec![DialoguePhase::Welcome],
        }
    }

    pub fn phase(&self) -> DialoguePhase {
        self.phase
    }

    pub fn presented(&self) -> &[CandidateCard] {
        &self.presented
    }

    pub fn presented_ids(&self) -> HashSet<String> {
        self.presented.iter().map(|c| c.spot_id.clone()).collect()
    }

    pub fn chosen(&self) -> &[String] {
        &self.chosen
    }

    pub fn plan(&self) -> Option<&PlanOutcome> {
        self.plan.as_ref()
    }

    /// Every phase entered so far, in order.
    pub fn phase_log(&self) -> &[DialoguePhase] {
        &self.phase_log
    }

    fn advance(&mut self) {
        if let Some(next) = self.phase.successor() {
            self.phase = next;
            self.phase_log.push(next);
        }
    }

    fn chosen_names(&self, catalog: &SpotCatalog) -> Vec<String> {
        self.chosen
            .iter()
            .map(|id| catalog.get(id).map_or_else(|| id.clone(), |s| s.name.clone()))
            .collect()
    }

    /// Decides the system's next move from the DST snapshot and the latest
    /// search result.
    pub fn next_action(
        &mut self,
        ctx: &ScenarioContext<'_>,
        dst: &DstState,
        latest_search: Option<&RankedSpots>,
        user_text: &str,
    ) -> Result<DialogueAction, ScenarioError> {
        match self.phase {
            DialoguePhase::End => Err(ScenarioError::Ended),
            DialoguePhase::Welcome => {
                self.advance();
                Ok(DialogueAction::Welcome)
            }
            DialoguePhase::Recommend => {
                let already = self.presented_ids();
                let cards: Vec<CandidateCard> = latest_search
                    .into_iter()
                    .flat_map(|r| r.entries.iter())
                    .filter(|e| e.score >= ctx.config.min_score && !already.contains(&e.spot_id))
                    .filter_map(|e| {
                        let spot = ctx.catalog.get(&e.spot_id)?;
                        Some(CandidateCard {
                            spot_id: spot.spot_id.clone(),
                            name: spot.name.clone(),
                            description: spot.description.clone(),
                            matched: spot.matched(&dst.slots),
                            score: e.score,
                        })
                    })
                    .take(ctx.config.candidates)
                    .collect();
                if cards.len() >= ctx.config.candidates {
                    self.presented.extend(cards.iter().cloned());
                    self.advance();
                    return Ok(DialogueAction::PresentCandidates { cards });
                }
                let category = ctx
                    .catalog
                    .vocabulary()
                    .categories()
                    .iter()
                    .find(|c| !dst.slots.has_category(&c.name));
                Ok(DialogueAction::Elicit {
                    category: category.map(|c| c.name.clone()),
                    examples: category
                        .map(|c| c.values.iter().take(3).map(|v| v.value.clone()).collect())
                        .unwrap_or_default(),
                })
            }
            DialoguePhase::Choose => Ok(DialogueAction::RequestChoice {
                cards: self.presented.clone(),
                problem: None,
            }),
            DialoguePhase::Route => {
                let names = self.chosen_names(ctx.catalog);
                let spots: Vec<&SpotRecord> = self.chosen.iter().filter_map(|id| ctx.catalog.get(id)).collect();
                let mut plan = RoutePlan::default();
                let mut failure = None;
                if spots.len() < 2 {
                    failure = Some("chosen spots missing from catalog".to_string());
                }
                for pair in spots.windows(2) {
                    match build_route(pair[0], pair[1], ctx.routes) {
                        Ok(p) => plan.legs.extend(p.legs),
                        Err(e) => {
                            failure = Some(e.to_string());
                            break;
                        }
                    }
                }
                self.advance();
                Ok(match failure {
                    None => {
                        let summary = describe_route(&plan, ctx.catalog);
                        self.plan = Some(PlanOutcome::Planned(plan.clone()));
                        DialogueAction::PresentRoute {
                            chosen: names,
                            plan,
                            summary,
                        }
                    }
                    Some(reason) => {
                        tracing::warn!(%reason, "route provider failed");
                        self.plan = Some(PlanOutcome::Unavailable(reason));
                        DialogueAction::RouteUnavailable {
                            summary: route_apology(&names),
                            chosen: names,
                        }
                    }
                })
            }
            DialoguePhase::Qa => {
                self.qa_turns += 1;
                let closing = self.qa_turns >= ctx.config.max_qa_turns;
                if closing {
                    self.advance();
                }
                Ok(DialogueAction::Answer {
                    question: user_text.to_string(),
                    plan_context: self.plan_context(ctx.catalog),
                    closing,
                })
            }
        }
    }

    /// Records the user's picks from the presented spots.
    pub fn register_choice(&mut self, chosen: &[String], config: &ScenarioConfig) -> Result<(), ChoiceError> {
        if self.phase != DialoguePhase::Choose {
            return Err(ChoiceError::WrongPhase(self.phase));
        }
        if chosen.len() != config.choose {
            return Err(ChoiceError::WrongCount {
                expected: config.choose,
                got: chosen.len(),
            });
        }
        let presented = self.presented_ids();
        let mut seen = HashSet::new();
        for id in chosen {
            if !presented.contains(id) {
                return Err(ChoiceError::NotPresented(id.clone()));
            }
            if !seen.insert(id) {
                return Err(ChoiceError::Duplicate(id.clone()));
            }
        }
        self.chosen = chosen.to_vec();
        self.advance();
        Ok(())
    }

    /// Plans one user turn: interprets choice and closing utterances, then
    /// defers to [`ScenarioState::next_action`].
    pub fn plan_turn(
        &mut self,
        ctx: &ScenarioContext<'_>,
        dst: &DstState,
        latest_search: Option<&RankedSpots>,
        user_text: &str,
    ) -> Result<DialogueAction, ScenarioError> {
        match self.phase {
            DialoguePhase::Choose => {
                let picks = parse_selection(user_text, &self.presented);
                if picks.is_empty() {
                    return self.next_action(ctx, dst, latest_search, user_text);
                }
                let ids: Result<Vec<String>, ChoiceError> = picks
                    .into_iter()
                    .map(|s| match s {
                        Selection::Spot(id) => Ok(id),
                        Selection::Unknown(raw) => Err(ChoiceError::NotPresented(raw)),
                    })
                    .collect();
                match ids.and_then(|ids| self.register_choice(&ids, ctx.config)) {
                    Ok(()) => self.next_action(ctx, dst, latest_search, user_text),
                    Err(e) => Ok(DialogueAction::RequestChoice {
                        cards: self.presented.clone(),
                        problem: Some(capitalize(&e.to_string())),
                    }),
                }
            }
            DialoguePhase::Qa if is_closing(user_text) => {
                self.advance();
                Ok(DialogueAction::Close {
                    chosen: self.chosen_names(ctx.catalog),
                })
            }
            _ => self.next_action(ctx, dst, latest_search, user_text),
        }
    }

    fn plan_context(&self, catalog: &SpotCatalog) -> String {
        let spots: Vec<String> = self
            .chosen
            .iter()
            .filter_map(|id| catalog.get(id))
            .map(|s| format!("{}: {}", s.name, s.description))
            .collect();
        let route = match &self.plan {
            Some(PlanOutcome::Planned(p)) => describe_route(p, catalog),
            Some(PlanOutcome::Unavailable(_)) => route_apology(&self.chosen_names(catalog)),
            None => String::new(),
        };
        let mut s = spots.join(" ");
        if !route.is_empty() {
            s.push(' ');
            s.push_str(&route);
        }
        s
    }

    /// Plain-language plan summary: one sentence per leg, or an apology
    /// when no route could be built.
    pub fn summarize_plan(&self, catalog: &SpotCatalog) -> Result<String, ScenarioError> {
        if !matches!(
            self.phase,
            DialoguePhase::Route | DialoguePhase::Qa | DialoguePhase::End
        ) || self.chosen.is_empty()
        {
            return Err(ScenarioError::WrongPhase(self.phase));
        }
        Ok(match &self.plan {
            Some(PlanOutcome::Planned(p)) => describe_route(p, catalog),
            Some(PlanOutcome::Unavailable(_)) | None => route_apology(&self.chosen_names(catalog)),
        })
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtdb::{search, RankedEntry};
    use indexmap::IndexMap;

    fn spot(id: &str, name: &str, lat: f64, lon: f64, seeing: &[&str]) -> SpotRecord {
        let mut md = IndexMap::new();
        md.insert("Seeing".to_string(), seeing.iter().map(|s| s.to_string()).collect());
        SpotRecord {
            spot_id: id.into(),
            name: name.into(),
            description: format!("About {name}."),
            metadata: md,
            location: Location { lat, lon },
        }
    }

    fn catalog() -> SpotCatalog {
        SpotCatalog::from_records([
            spot("s1", "Alpha Temple", 35.0, 135.0, &["temple", "garden"]),
            spot("s2", "Beta Shrine", 35.0, 135.01, &["temple"]),
            spot("s3", "Gamma Garden", 35.01, 135.0, &["garden"]),
            spot("s4", "Delta Hall", 35.02, 135.0, &["temple"]),
            spot("s5", "Epsilon Castle", 35.03, 135.0, &["castle"]),
        ])
        .unwrap()
    }

    struct Failing;
    impl RouteProvider for Failing {
        fn route(&self, _: &SpotRecord, _: &SpotRecord) -> Result<RoutePlan, RouteError> {
            Err(RouteError::Unavailable("service down".into()))
        }
    }

    fn dst(pairs: &[(&str, &str)]) -> DstState {
        let mut d = DstState::empty("s");
        d.slots = SlotSet::from_pairs(pairs.iter().copied());
        d.version = 1;
        d
    }

    #[test]
    fn phases_advance_linearly() {
        assert_eq!(DialoguePhase::Welcome.successor(), Some(DialoguePhase::Recommend));
        assert_eq!(DialoguePhase::End.successor(), None);
        assert!(DialoguePhase::is_valid_walk(&DialoguePhase::ALL));
        assert!(!DialoguePhase::is_valid_walk(&[
            DialoguePhase::Welcome,
            DialoguePhase::Choose
        ]));
    }

    #[test]
    fn recommend_with_empty_dst_elicits_first_category() {
        let cat = catalog();
        let config = ScenarioConfig::default();
        let ctx = ScenarioContext {
            catalog: &cat,
            routes: &MockRouteProvider,
            config: &config,
        };
        let mut s = ScenarioState::new();
        assert_eq!(
            s.next_action(&ctx, &dst(&[]), None, "hi").unwrap(),
            DialogueAction::Welcome
        );
        let empty = dst(&[]);
        let r = search(&cat, &empty, 4, &HashSet::new());
        match s.next_action(&ctx, &empty, Some(&r), "hi").unwrap() {
            DialogueAction::Elicit { category, examples } => {
                assert_eq!(category.as_deref(), Some("Seeing"));
                assert_eq!(examples, vec!["temple", "garden", "castle"]);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(s.phase(), DialoguePhase::Recommend);
    }

    #[test]
    fn four_positive_candidates_are_presented() {
        let cat = catalog();
        let config = ScenarioConfig::default();
        let ctx = ScenarioContext {
            catalog: &cat,
            routes: &MockRouteProvider,
            config: &config,
        };
        let mut s = ScenarioState::new();
        s.next_action(&ctx, &dst(&[]), None, "hi").unwrap();
        let d = dst(&[("Seeing", "temple"), ("Seeing", "garden")]);
        let r = search(&cat, &d, 4, &HashSet::new());
        let action = s.next_action(&ctx, &d, Some(&r), "x").unwrap();
        let DialogueAction::PresentCandidates { cards } = action else {
            panic!()
        };
        let ids: Vec<&str> = cards.iter().map(|c| c.spot_id.as_str()).collect();
        assert_eq!(ids, vec!["s1", "s2", "s3", "s4"]);
        assert_eq!(cards[0].matched.value_count(), 2);
        assert_eq!(s.phase(), DialoguePhase::Choose);
    }

    #[test]
    fn zero_score_entries_do_not_count() {
        let cat = catalog();
        let config = ScenarioConfig::default();
        let ctx = ScenarioContext {
            catalog: &cat,
            routes: &MockRouteProvider,
            config: &config,
        };
        let mut s = ScenarioState::new();
        s.next_action(&ctx, &dst(&[]), None, "hi").unwrap();
        let d = dst(&[("Seeing", "castle")]);
        let r = RankedSpots {
            entries: ["s5", "s1", "s2", "s3"]
                .iter()
                .enumerate()
                .map(|(i, id)| RankedEntry {
                    spot_id: id.to_string(),
                    score: u32::from(i == 0),
                })
                .collect(),
            dst_version: 1,
        };
        assert!(matches!(
            s.next_action(&ctx, &d, Some(&r), "x").unwrap(),
            DialogueAction::Elicit { .. }
        ));
    }

    fn in_choose() -> (SpotCatalog, ScenarioState) {
        let cat = catalog();
        let config = ScenarioConfig::default();
        let ctx = ScenarioContext {
            catalog: &cat,
            routes: &MockRouteProvider,
            config: &config,
        };
        let mut s = ScenarioState::new();
        s.next_action(&ctx, &dst(&[]), None, "hi").unwrap();
        let d = dst(&[("Seeing", "temple"), ("Seeing", "garden")]);
        let r = search(&cat, &d, 4, &HashSet::new());
        s.next_action(&ctx, &d, Some(&r), "x").unwrap();
        (cat, s)
    }

    #[test]
    fn register_choice_validates_picks() {
        let config = ScenarioConfig::default();
        let (_, s) = in_choose();
        let ids = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert!(matches!(
            s.clone().register_choice(&ids(&["s1", "s2", "s3"]), &config),
            Err(ChoiceError::WrongCount { got: 3, .. })
        ));
        assert!(matches!(
            s.clone().register_choice(&ids(&["s1", "s5"]), &config),
            Err(ChoiceError::NotPresented(_))
        ));
        assert!(matches!(
            s.clone().register_choice(&ids(&["s1", "s1"]), &config),
            Err(ChoiceError::Duplicate(_))
        ));
        let mut ok = s.clone();
        ok.register_choice(&ids(&["s1", "s3"]), &config).unwrap();
        assert_eq!(ok.chosen(), &["s1".to_string(), "s3".to_string()]);
        assert_eq!(ok.phase(), DialoguePhase::Route);
        assert!(matches!(
            ok.register_choice(&ids(&["s1", "s3"]), &config),
            Err(ChoiceError::WrongPhase(DialoguePhase::Route))
        ));
    }

    #[test]
    fn selection_parsing() {
        let (_, s) = in_choose();
        let p = s.presented();
        let spot = |id: &str| Selection::Spot(id.to_string());
        assert_eq!(parse_selection("1 and 3", p), vec![spot("s1"), spot("s3")]);
        assert_eq!(
            parse_selection("The second and the fourth, please", p),
            vec![spot("s2"), spot("s4")]
        );
        assert_eq!(
            parse_selection("gamma garden and alpha temple", p),
            vec![spot("s3"), spot("s1")]
        );
        assert_eq!(
            parse_selection("2 and 7", p),
            vec![spot("s2"), Selection::Unknown("7".into())]
        );
        assert!(parse_selection("hmm, not sure", p).is_empty());
    }

    #[test]
    fn choose_turn_rejects_then_accepts() {
        let (cat, mut s) = in_choose();
        let config = ScenarioConfig::default();
        let ctx = ScenarioContext {
            catalog: &cat,
            routes: &MockRouteProvider,
            config: &config,
        };
        let d = dst(&[]);
        let a = s.plan_turn(&ctx, &d, None, "1, 2 and 3").unwrap();
        assert!(matches!(a, DialogueAction::RequestChoice { problem: Some(_), .. }));
        assert_eq!(s.phase(), DialoguePhase::Choose);
        let a = s.plan_turn(&ctx, &d, None, "1 and 3").unwrap();
        let DialogueAction::PresentRoute { plan, summary, .. } = a else {
            panic!()
        };
        assert_eq!(plan.legs.len(), 1);
        assert!(summary.contains("Alpha Temple") && summary.contains("Gamma Garden"));
        assert_eq!(s.phase(), DialoguePhase::Qa);
        assert_eq!(s.summarize_plan(&cat).unwrap(), summary);
    }

    #[test]
    fn route_failure_degrades_to_apology() {
        let (cat, mut s) = in_choose();
        let config = ScenarioConfig::default();
        let ctx = ScenarioContext {
            catalog: &cat,
            routes: &Failing,
            config: &config,
        };
        let a = s.plan_turn(&ctx, &dst(&[]), None, "1 and 2").unwrap();
        let DialogueAction::RouteUnavailable { summary, .. } = a else {
            panic!()
        };
        assert!(summary.starts_with("I'm sorry"));
        assert_eq!(s.phase(), DialoguePhase::Qa);
        let text = s.summarize_plan(&cat).unwrap();
        assert!(!text.contains("min"));
        assert_eq!(text.matches(". ").count() + 1, 1);
    }

    #[test]
    fn qa_answers_carry_plan_context_then_close() {
        let (cat, mut s) = in_choose();
        let config = ScenarioConfig {
            max_qa_turns: 2,
            ..ScenarioConfig::default()
        };
        let ctx = ScenarioContext {
            catalog: &cat,
            routes: &MockRouteProvider,
            config: &config,
        };
        let d = dst(&[]);
        s.plan_turn(&ctx, &d, None, "1 and 2").unwrap();
        let a = s.plan_turn(&ctx, &d, None, "How old is it?").unwrap();
        assert_eq!(a.purpose(), Purpose::Qa);
        let ctx_text = a.context();
        assert!(ctx_text.contains("Alpha Temple") && ctx_text.contains("Beta Shrine"));
        assert!(matches!(a, DialogueAction::Answer { closing: false, .. }));
        let a = s.plan_turn(&ctx, &d, None, "And the other one?").unwrap();
        assert!(matches!(a, DialogueAction::Answer { closing: true, .. }));
        assert_eq!(s.phase(), DialoguePhase::End);
        assert_eq!(s.plan_turn(&ctx, &d, None, "hello?"), Err(ScenarioError::Ended));
        assert!(DialoguePhase::is_valid_walk(s.phase_log()));
    }

    #[test]
    fn closing_phrases() {
        assert!(is_closing("Thank you, goodbye!"));
        assert!(is_closing("thanks"));
        assert!(is_closing("OK, that's all."));
        assert!(!is_closing("Which one is closer?"));
    }

    #[test]
    fn mock_route_arithmetic() {
        assert_eq!(MockRouteProvider::leg(0.0), (TravelMode::Walk, 1));
        assert_eq!(MockRouteProvider::leg(1600.0), (TravelMode::Walk, 20));
        assert_eq!(MockRouteProvider::leg(2000.0), (TravelMode::Walk, 25));
        assert_eq!(MockRouteProvider::leg(8000.0), (TravelMode::Transit, 25));
        assert_eq!(MockRouteProvider::leg(2000.1), (TravelMode::Transit, 11));
        let a = spot("a", "A", 35.0, 135.0, &[]);
        let b = spot("b", "B", 35.0, 135.0, &[]);
        let p = build_route(&a, &b, &MockRouteProvider).unwrap();
        assert_eq!(p.legs[0].distance_m, 0.0);
        assert_eq!((p.legs[0].mode, p.legs[0].duration_min), (TravelMode::Walk, 1));
        assert_eq!(
            build_route(&a, &a, &MockRouteProvider),
            Err(RouteError::SameSpot("a".into()))
        );
    }
}
