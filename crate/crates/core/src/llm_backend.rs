//! Completion backends behind a single blocking contract.
//!
//! Three implementations ship with the crate: [`MockBackend`] (deterministic,
//! derives its answer from the prompt alone), [`ScriptedBackend`] (replays
//! recorded replies per session and purpose) and [`HttpBackend`] (a
//! chat-completion style endpoint). [`with_latency`] wraps any of them and
//! reports an injected delay that the orchestrator spends on the virtual clock.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nlu::{self, WireSlot, WireSlots};
use crate::prompts;
use crate::time::Micros;

/// Environment variable holding the API key for [`HttpBackend`].
pub const API_KEY_ENV: &str = "ASYNCMLD_LLM_API_KEY";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Respond,
    Nlu,
    Qa,
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Purpose::Respond => "respond",
            Purpose::Nlu => "nlu",
            Purpose::Qa => "qa",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendRequest {
    pub purpose: Purpose,
    pub prompt: String,
    pub session_id: String,
    pub turn_id: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendResponse {
    pub text: String,
    pub latency_injected: Micros,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("request prompt is empty")]
    EmptyPrompt,
    #[error("script exhausted for session `{session_id}` and purpose `{purpose}`")]
    ScriptExhausted { session_id: String, purpose: Purpose },
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}")]
    Status { status: u16 },
    #[error("backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A completion backend. Implementations must be safe to call from the
/// concurrent path-A and path-B tasks of any number of sessions.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError>;

    fn name(&self) -> &str;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }

    fn name(&self) -> &str {
        (**self).name()
    }
}

fn check_request(request: &BackendRequest) -> Result<(), BackendError> {
    if request.prompt.trim().is_empty() {
        return Err(BackendError::EmptyPrompt);
    }
    Ok(())
}

/// Deterministic offline backend.
///
/// For [`Purpose::Nlu`] it reads the vocabulary and the utterance back out of
/// the prompt and keyword-scans the utterance, so prompt truncation changes
/// what it can find. For reply purposes it returns the draft reply embedded
/// in the prompt.
#[derive(Clone, Debug, Default)]
pub struct MockBackend;

pub const MOCK_FALLBACK_REPLY: &str = "I see. Could you tell me a little more about your plans?";

impl MockBackend {
    pub fn new() -> Self {
        MockBackend
    }

    fn understand(prompt: &str) -> String {
        let slots = match nlu::parse_prompt_vocabulary(prompt) {
            Some(parsed) => {
                let utterance = tokenize(&parsed.user_text);
                parsed
                    .categories
                    .iter()
                    .flat_map(|(category, values)| {
                        values
                            .iter()
                            .filter(|v| mentions(&utterance, &tokenize(v)))
                            .map(move |v| WireSlot {
                                category: category.clone(),
                                value: v.clone(),
                            })
                    })
                    .collect()
            }
            None => Vec::new(),
        };
        serde_json::to_string(&WireSlots { slots }).expect("slot wire format serializes")
    }
}

impl Backend for MockBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        check_request(request)?;
        let text = match request.purpose {
            Purpose::Nlu => Self::understand(&request.prompt),
            Purpose::Respond | Purpose::Qa => prompts::extract_draft(&request.prompt)
                .filter(|d| !d.is_empty())
                .unwrap_or(MOCK_FALLBACK_REPLY)
                .to_string(),
        };
        Ok(BackendResponse {
            text,
            latency_injected: Micros::ZERO,
        })
    }

    fn name(&self) -> &str {
        "mock"
    }
}

fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

// Contiguous token match; the final token may carry a plural "s".
fn mentions(utterance: &[String], value: &[String]) -> bool {
    if value.is_empty() || value.len() > utterance.len() {
        return false;
    }
    utterance.windows(value.len()).any(|w| {
        let last = value.len() - 1;
        w[..last] == value[..last] && (w[last] == value[last] || w[last] == format!("{}s", value[last]))
    })
}

/// One recorded reply in a backend script file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub session_id: String,
    pub purpose: Purpose,
    pub text: String,
}

/// Session id that matches any session in a [`ScriptedBackend`] script.
pub const ANY_SESSION: &str = "*";

/// Replays scripted replies in order, one queue per `(session_id, purpose)`.
///
/// Entries whose `session_id` is [`ANY_SESSION`] serve sessions that have no
/// queue of their own for that purpose.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queues: Mutex<HashMap<(String, Purpose), VecDeque<String>>>,
}

impl ScriptedBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut queues: HashMap<(String, Purpose), VecDeque<String>> = HashMap::new();
        for e in entries {
            queues.entry((e.session_id, e.purpose)).or_default().push_back(e.text);
        }
        Self {
            queues: Mutex::new(queues),
        }
    }

    /// Reads a line-delimited JSON script. Blank lines are skipped.
    pub fn from_reader(reader: impl BufRead) -> Result<Self, BackendError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry = serde_json::from_str(&line).map_err(|e| BackendError::Script {
                line: idx + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn remaining(&self, session_id: &str, purpose: Purpose) -> usize {
        let queues = self.queues.lock().expect("script lock poisoned");
        queues.get(&(session_id.to_string(), purpose)).map_or(0, VecDeque::len)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        check_request(request)?;
        let mut queues = self.queues.lock().expect("script lock poisoned");
        let own = (request.session_id.clone(), request.purpose);
        let key = if queues.get(&own).is_some_and(|q| !q.is_empty()) {
            own
        } else {
            (ANY_SESSION.to_string(), request.purpose)
        };
        match queues.get_mut(&key).and_then(VecDeque::pop_front) {
            Some(text) => Ok(BackendResponse {
                text,
                latency_injected: Micros::ZERO,
            }),
            None => Err(BackendError::ScriptExhausted {
                session_id: request.session_id.clone(),
                purpose: request.purpose,
            }),
        }
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Latency distribution for injected delays.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LatencyDistribution {
    Fixed(Micros),
    Uniform { lo: Micros, hi: Micros, seed: u64 },
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LatencyError {
    #[error("latency must be a finite non-negative number of seconds, got {0}")]
    Negative(f64),
    #[error("uniform latency bounds are inverted: lo {lo} > hi {hi}")]
    Inverted { lo: f64, hi: f64 },
}

fn checked_secs(secs: f64) -> Result<Micros, LatencyError> {
    if !secs.is_finite() || secs < 0.0 {
        return Err(LatencyError::Negative(secs));
    }
    Ok(Micros::from_secs_f64(secs))
}

impl LatencyDistribution {
    pub fn fixed(secs: f64) -> Result<Self, LatencyError> {
        Ok(LatencyDistribution::Fixed(checked_secs(secs)?))
    }

    pub fn uniform(lo: f64, hi: f64, seed: u64) -> Result<Self, LatencyError> {
        let (l, h) = (checked_secs(lo)?, checked_secs(hi)?);
        if l > h {
            return Err(LatencyError::Inverted { lo, hi });
        }
        Ok(LatencyDistribution::Uniform { lo: l, hi: h, seed })
    }

    pub const ZERO: LatencyDistribution = LatencyDistribution::Fixed(Micros::ZERO);
}

/// Draws delays from a [`LatencyDistribution`]; seeded draws are reproducible.
#[derive(Debug)]
pub struct LatencySampler {
    dist: LatencyDistribution,
    rng: Mutex<ChaCha8Rng>,
}

impl LatencySampler {
    pub fn new(dist: LatencyDistribution) -> Self {
        let seed = match dist {
            LatencyDistribution::Uniform { seed, .. } => seed,
            LatencyDistribution::Fixed(_) => 0,
        };
        Self {
            dist,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn distribution(&self) -> LatencyDistribution {
        self.dist
    }

    pub fn sample(&self) -> Micros {
        match self.dist {
            LatencyDistribution::Fixed(d) => d,
            LatencyDistribution::Uniform { lo, hi, .. } => {
                if lo == hi {
                    return lo;
                }
                let mut rng = self.rng.lock().expect("latency rng poisoned");
                Micros(rng.random_range(lo.0..=hi.0))
            }
        }
    }
}

/// A backend whose every reply carries an injected latency.
pub struct Latency<B> {
    inner: B,
    sampler: LatencySampler,
}

/// Wraps `backend` so each completion reports a delay drawn from
/// `distribution`, added to whatever latency the inner backend reported.
pub fn with_latency<B: Backend>(backend: B, distribution: LatencyDistribution) -> Latency<B> {
    Latency {
        inner: backend,
        sampler: LatencySampler::new(distribution),
    }
}

impl<B: Backend> Backend for Latency<B> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let delay = self.sampler.sample();
        let mut response = self.inner.complete(request)?;
        response.latency_injected += delay;
        Ok(response)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// Records every successful completion as a [`ScriptEntry`], so a live or
/// mock session can later be replayed through a [`ScriptedBackend`].
pub struct Recording<B> {
    inner: B,
    log: Mutex<Vec<ScriptEntry>>,
}

impl<B: Backend> Recording<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<ScriptEntry> {
        self.log.lock().expect("recording lock poisoned").clone()
    }
}

impl<B: Backend> Backend for Recording<B> {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        let response = self.inner.complete(request)?;
        self.log.lock().expect("recording lock poisoned").push(ScriptEntry {
            session_id: request.session_id.clone(),
            purpose: request.purpose,
            text: response.text.clone(),
        });
        Ok(response)
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// Connection settings for [`HttpBackend`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_http_timeout")]
    pub timeout_seconds: f64,
}

fn default_http_timeout() -> f64 {
    30.0
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    content: String,
}

/// Chat-completion client: one user message in, first choice text out.
/// The measured round trip is reported as the injected latency.
pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// Builds a client reading the API key from [`API_KEY_ENV`].
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let api_key =
            std::env::var(API_KEY_ENV).map_err(|_| BackendError::Config(format!("{API_KEY_ENV} is not set")))?;
        Self::new(config, api_key)
    }

    pub fn new(config: HttpBackendConfig, api_key: String) -> Result<Self, BackendError> {
        if !(config.timeout_seconds.is_finite() && config.timeout_seconds > 0.0) {
            return Err(BackendError::Config("timeout_seconds must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_seconds)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, api_key, agent })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        check_request(request)?;
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
        };
        let started = Instant::now();
        let mut response = self
            .agent
            .post(self.endpoint())
            .header("Authorization", format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status });
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport("response has no choices".into()))?;
        Ok(BackendResponse {
            text,
            latency_injected: Micros::from_secs_f64(started.elapsed().as_secs_f64()),
        })
    }

    fn name(&self) -> &str {
        "http"
    }
}
