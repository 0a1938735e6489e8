//! Completion backends and answer parsing.
//!
//! Three backends implement [`LlmBackend`]: a live chat-completion HTTP
//! client (API key via environment variable), a replay backend returning
//! recorded responses keyed by a stable prompt hash, and a deterministic
//! mock driven by a lookup table. Prompts are passed through byte-for-byte;
//! no backend mutates them.
//!
//! The model's answer contract is `{'type': []}`; [`parse_prediction`]
//! extracts the first JSON object from the raw text and never fails —
//! malformed output yields an empty prediction with `parse_ok = false`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::augmentor::{Mode, Prompt};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    ReplayFile {
        path: String,
        line: usize,
        message: String,
    },
    #[error("replay cache has no response for prompt hash {hash}")]
    ReplayMiss { hash: String },
    #[error("live backend is not configured: {0}")]
    Configuration(String),
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("unexpected completion response: {0}")]
    Protocol(String),
}

/// One completion request. Temperature defaults to 0; the model tag is
/// opaque and only meaningful to the live backend.
#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub prompt: Prompt,
    pub temperature: f64,
    pub model: String,
}

impl CompletionRequest {
    pub fn new(prompt: Prompt, model: impl Into<String>) -> Self {
        CompletionRequest {
            prompt,
            temperature: 0.0,
            model: model.into(),
        }
    }
}

/// A completion backend. Implementations must accept concurrent requests.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError>;
}

/// Stable hash keying replay entries: SHA-256 over the system message, a
/// NUL separator, and the user message, hex-encoded.
pub fn prompt_hash(system: &str, user: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system.as_bytes());
    hasher.update([0u8]);
    hasher.update(user.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// One line of a replay cache file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub prompt_hash: String,
    pub response: String,
}

/// Returns recorded responses keyed by prompt hash; misses are errors
/// naming the key.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut responses = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry =
                serde_json::from_str(line).map_err(|err| LlmError::ReplayFile {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: err.to_string(),
                })?;
            if responses
                .insert(entry.prompt_hash.clone(), entry.response)
                .is_some()
            {
                return Err(LlmError::ReplayFile {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: format!("duplicate prompt hash {}", entry.prompt_hash),
                });
            }
        }
        Ok(ReplayBackend { responses })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        ReplayBackend {
            responses: entries
                .into_iter()
                .map(|e| (e.prompt_hash, e.response))
                .collect(),
        }
    }
}

/// Writes a replay cache file, one JSON entry per line.
pub fn write_replay(path: impl AsRef<Path>, entries: &[ReplayEntry]) -> Result<(), LlmError> {
    let path = path.as_ref();
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry).expect("replay entry serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| LlmError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl LlmBackend for ReplayBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let hash = prompt_hash(&req.prompt.system, &req.prompt.user);
        self.responses
            .get(&hash)
            .cloned()
            .ok_or(LlmError::ReplayMiss { hash })
    }
}

/// Deterministic stand-in computing responses with a user-supplied rule.
/// The default rule echoes the first KG-Context label mapped through a
/// lookup table; prompts without a KG-Context (or with an unmapped label)
/// yield an empty type list.
pub struct MockBackend {
    rule: Box<dyn Fn(&CompletionRequest) -> String + Send + Sync>,
}

impl MockBackend {
    pub fn with_rule(rule: impl Fn(&CompletionRequest) -> String + Send + Sync + 'static) -> Self {
        MockBackend {
            rule: Box::new(rule),
        }
    }

    pub fn from_lookup_table(table: BTreeMap<String, String>) -> Self {
        Self::with_rule(move |req| {
            let answer = extract_context_label(&req.prompt.user)
                .and_then(|label| table.get(label))
                .cloned();
            match answer {
                Some(label) => {
                    format!("{{\"type\": [{}]}}", serde_json::to_string(&label).unwrap())
                }
                None => "{\"type\": []}".to_string(),
            }
        })
    }

    /// Loads the lookup table from a JSON object file mapping context
    /// labels to predicted types.
    pub fn from_lookup_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let table: BTreeMap<String, String> = serde_json::from_str(&text)
            .map_err(|err| LlmError::Protocol(format!("mock lookup {}: {err}", path.display())))?;
        Ok(Self::from_lookup_table(table))
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        Ok((self.rule)(req))
    }
}

/// First label of the KG-Context step of a prompt, if present.
pub fn extract_context_label(user_message: &str) -> Option<&str> {
    let step = user_message.find("Consider this information carefully: ")?;
    let tail = &user_message[step..];
    let entities = tail.find("entities: ")?;
    let list = &tail[entities + "entities: ".len()..];
    let end = list.find(" (")?;
    Some(&list[..end])
}

/// Configuration for the live chat-completion backend.
#[derive(Debug, Clone)]
pub struct LiveLlmConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
    /// Request-rate ceiling as a minimum spacing between request starts.
    pub min_request_interval: Duration,
}

impl Default for LiveLlmConfig {
    fn default() -> Self {
        LiveLlmConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            timeout: Duration::from_secs(60),
            max_retries: 4,
            initial_backoff: Duration::from_millis(500),
            max_in_flight: 4,
            min_request_interval: Duration::ZERO,
        }
    }
}

struct Pacer {
    last_start: Mutex<Option<Instant>>,
    interval: Duration,
}

impl Pacer {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let mut last = self.last_start.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.interval {
                std::thread::sleep(self.interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}

struct InflightGate {
    state: Mutex<usize>,
    cond: Condvar,
    limit: usize,
}

impl InflightGate {
    fn new(limit: usize) -> Self {
        InflightGate {
            state: Mutex::new(0),
            cond: Condvar::new(),
            limit: limit.max(1),
        }
    }

    fn acquire(&self) {
        let mut in_flight = self.state.lock().unwrap();
        while *in_flight >= self.limit {
            in_flight = self.cond.wait(in_flight).unwrap();
        }
        *in_flight += 1;
    }

    fn release(&self) {
        let mut in_flight = self.state.lock().unwrap();
        *in_flight -= 1;
        self.cond.notify_one();
    }
}

/// Live chat-completion client with bounded retries, an in-flight cap, and
/// a request-rate ceiling.
pub struct LiveBackend {
    config: LiveLlmConfig,
    api_key: String,
    agent: ureq::Agent,
    gate: InflightGate,
    pacer: Pacer,
}

impl LiveBackend {
    /// Resolves credentials immediately so a misconfigured run fails before
    /// any prompt is sent.
    pub fn new(config: LiveLlmConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            LlmError::Configuration(format!(
                "environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        if api_key.is_empty() {
            return Err(LlmError::Configuration(format!(
                "environment variable {} is empty",
                config.api_key_env
            )));
        }
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        let gate = InflightGate::new(config.max_in_flight);
        let pacer = Pacer {
            last_start: Mutex::new(None),
            interval: config.min_request_interval,
        };
        Ok(LiveBackend {
            config,
            api_key,
            agent,
            gate,
            pacer,
        })
    }

    fn post_with_retry(&self, body: &Value) -> Result<String, LlmError> {
        let attempts = self.config.max_retries.max(1);
        let mut backoff = self.config.initial_backoff;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            self.pacer.wait();
            let result = self
                .agent
                .post(&self.config.endpoint)
                .set("Authorization", &format!("Bearer {}", self.api_key))
                .set("Content-Type", "application/json")
                .send_json(body.clone());
            match result {
                Ok(response) => {
                    let text = response
                        .into_string()
                        .map_err(|err| LlmError::Protocol(format!("reading body: {err}")))?;
                    return parse_completion_body(&text);
                }
                Err(ureq::Error::Status(code, response))
                    if code == 429 || (500..600).contains(&code) =>
                {
                    let retry_after = response
                        .header("Retry-After")
                        .and_then(|v| v.parse::<u64>().ok())
                        .map(Duration::from_secs);
                    last_error = format!("HTTP {code}");
                    if attempt < attempts {
                        std::thread::sleep(retry_after.unwrap_or(backoff));
                        backoff = backoff.saturating_mul(2);
                    }
                    continue;
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(LlmError::Protocol(format!("HTTP {code}")));
                }
                Err(ureq::Error::Transport(err)) => {
                    last_error = err.to_string();
                }
            }
            if attempt < attempts {
                std::thread::sleep(backoff);
                backoff = backoff.saturating_mul(2);
            }
        }
        Err(LlmError::Transport {
            attempts,
            message: last_error,
        })
    }
}

pub(crate) fn parse_completion_body(text: &str) -> Result<String, LlmError> {
    let payload: Value = serde_json::from_str(text)
        .map_err(|err| LlmError::Protocol(format!("invalid JSON: {err}")))?;
    payload
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|choices| choices.first())
        .and_then(|choice| choice.get("message"))
        .and_then(|message| message.get("content"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::Protocol("missing choices[0].message.content".to_string()))
}

impl LlmBackend for LiveBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": req.model,
            "temperature": req.temperature,
            "messages": [
                {"role": "system", "content": req.prompt.system},
                {"role": "user", "content": req.prompt.user},
            ],
        });
        self.gate.acquire();
        let result = self.post_with_retry(&body);
        self.gate.release();
        result
    }
}

/// Parsed model answer. `parse_ok = false` always comes with empty labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prediction {
    pub labels: Vec<String>,
    pub raw: String,
    pub parse_ok: bool,
}

impl Prediction {
    fn failed(raw: &str) -> Self {
        Prediction {
            labels: Vec::new(),
            raw: raw.to_string(),
            parse_ok: false,
        }
    }
}

/// Extracts the prediction from raw model text. Total: any input yields a
/// `Prediction`. The first parseable JSON object decides; its `type` key is
/// read as a list (a bare string is promoted to a one-element list). In
/// single-label mode only the first element is kept. Labels outside the
/// vocabulary are retained verbatim; they score as false positives.
pub fn parse_prediction(raw: &str, mode: Mode) -> Prediction {
    let Some(value) = first_json_object(raw) else {
        return Prediction::failed(raw);
    };
    let labels = match value.get("type") {
        Some(Value::String(label)) => vec![label.clone()],
        Some(Value::Array(items)) => {
            let mut labels = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(label) => labels.push(label.clone()),
                    _ => return Prediction::failed(raw),
                }
            }
            labels
        }
        _ => return Prediction::failed(raw),
    };
    let labels = match mode {
        Mode::Single => labels.into_iter().take(1).collect(),
        Mode::Multi => labels,
    };
    Prediction {
        labels,
        raw: raw.to_string(),
        parse_ok: true,
    }
}

/// First balanced `{...}` region of the text that parses as JSON.
fn first_json_object(raw: &str) -> Option<Value> {
    for (idx, ch) in raw.char_indices() {
        if ch != '{' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&raw[idx..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            if value.is_object() {
                return Some(value);
            }
        }
    }
    None
}
