//! HTTP client for a remote KG endpoint.
//!
//! The wire contract mirrors the MediaWiki actions: a search endpoint
//! taking (query, limit) and returning id/label pairs, and an entity
//! endpoint taking ids and returning labels and claims. Exact URL shapes
//! are configuration; `{query}`, `{limit}`, and `{ids}` placeholders are
//! substituted with percent-encoded values.
//!
//! Responses are cached on disk keyed by (operation, argument) so reruns
//! are deterministic and cheap. Requests retry with exponential backoff
//! and are bounded by a configurable in-flight limit.

use std::fs;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{natural_cmp, EntityId, KgBackend, KgError, Triple};

#[derive(Debug, Clone)]
pub struct RemoteKgConfig {
    /// Search URL template with `{query}` and `{limit}` placeholders.
    pub search_url: String,
    /// Entity URL template with an `{ids}` placeholder.
    pub entity_url: String,
    /// Directory for the on-disk response cache; none disables caching.
    pub cache_dir: Option<PathBuf>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
}

impl RemoteKgConfig {
    /// Templates for a MediaWiki `w/api.php` endpoint, e.g.
    /// `https://www.wikidata.org/w/api.php`.
    pub fn mediawiki(api_base: &str) -> Self {
        let base = api_base.trim_end_matches('/');
        RemoteKgConfig {
            search_url: format!(
                "{base}?action=wbsearchentities&format=json&language=en&uselang=en&type=item&limit={{limit}}&search={{query}}"
            ),
            entity_url: format!(
                "{base}?action=wbgetentities&format=json&props=labels%7Cclaims&languages=en&ids={{ids}}"
            ),
            cache_dir: None,
            timeout: Duration::from_secs(30),
            max_retries: 4,
            initial_backoff: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }
}

/// Counting gate bounding concurrent outbound requests.
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

pub struct RemoteKg {
    config: RemoteKgConfig,
    agent: ureq::Agent,
    gate: InflightGate,
}

impl RemoteKg {
    pub fn new(config: RemoteKgConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        let gate = InflightGate::new(config.max_in_flight);
        RemoteKg {
            config,
            agent,
            gate,
        }
    }

    fn cache_path(&self, op: &str, arg: &str) -> Option<PathBuf> {
        let dir = self.config.cache_dir.as_ref()?;
        let mut hasher = Sha256::new();
        hasher.update(arg.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(32);
        for byte in digest.iter().take(16) {
            hex.push_str(&format!("{byte:02x}"));
        }
        Some(dir.join(format!("{op}-{hex}.json")))
    }

    /// Cache-then-network fetch of one operation. The raw body is cached
    /// verbatim so replays parse exactly like live responses.
    fn fetch(&self, op: &str, arg: &str, url: &str) -> Result<String, KgError> {
        let cache_path = self.cache_path(op, arg);
        if let Some(path) = &cache_path {
            if let Ok(body) = fs::read_to_string(path) {
                return Ok(body);
            }
        }

        let body = self.http_get(url)?;

        if let Some(path) = &cache_path {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|source| KgError::Io {
                    path: parent.display().to_string(),
                    source,
                })?;
            }
            fs::write(path, &body).map_err(|source| KgError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(body)
    }

    fn http_get(&self, url: &str) -> Result<String, KgError> {
        self.gate.acquire();
        let result = self.http_get_with_retry(url);
        self.gate.release();
        result
    }

    fn http_get_with_retry(&self, url: &str) -> Result<String, KgError> {
        let mut backoff = self.config.initial_backoff;
        let attempts = self.config.max_retries.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.agent.get(url).call() {
                Ok(response) => {
                    return response.into_string().map_err(|err| KgError::Protocol {
                        url: url.to_string(),
                        message: format!("reading body: {err}"),
                    });
                }
                Err(ureq::Error::Status(code, _)) if code == 429 || (500..600).contains(&code) => {
                    last_error = format!("HTTP {code}");
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(KgError::Protocol {
                        url: url.to_string(),
                        message: format!("HTTP {code}"),
                    });
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
        Err(KgError::Transport {
            url: url.to_string(),
            attempts,
            message: last_error,
        })
    }

    fn entity_payload(&self, id: &EntityId) -> Result<Value, KgError> {
        let url = self
            .config
            .entity_url
            .replace("{ids}", &percent_encode(id.as_str()));
        let body = self.fetch("entity", id.as_str(), &url)?;
        serde_json::from_str(&body).map_err(|err| KgError::Protocol {
            url,
            message: format!("invalid JSON: {err}"),
        })
    }
}

impl KgBackend for RemoteKg {
    fn entity_label(&self, id: &EntityId) -> Result<String, KgError> {
        let payload = self.entity_payload(id)?;
        Ok(parse_entity_label(&payload, id))
    }

    fn one_hop(&self, id: &EntityId) -> Result<Vec<Triple>, KgError> {
        let payload = self.entity_payload(id)?;
        Ok(parse_entity_claims(&payload, id))
    }

    fn search_entities(
        &self,
        mention: &str,
        limit: usize,
    ) -> Result<Vec<(EntityId, String)>, KgError> {
        if mention.is_empty() {
            return Err(KgError::InvalidSearch("mention is empty".into()));
        }
        if limit == 0 {
            return Err(KgError::InvalidSearch("limit must be at least 1".into()));
        }
        let url = self
            .config
            .search_url
            .replace("{query}", &percent_encode(mention))
            .replace("{limit}", &limit.to_string());
        let body = self.fetch("search", &format!("{limit}:{mention}"), &url)?;
        let payload: Value = serde_json::from_str(&body).map_err(|err| KgError::Protocol {
            url: url.clone(),
            message: format!("invalid JSON: {err}"),
        })?;
        parse_search_response(&payload, limit).ok_or(KgError::Protocol {
            url,
            message: "missing search results".into(),
        })
    }
}

pub(crate) fn parse_search_response(
    payload: &Value,
    limit: usize,
) -> Option<Vec<(EntityId, String)>> {
    let hits = payload.get("search")?.as_array()?;
    let mut out = Vec::new();
    for hit in hits.iter().take(limit) {
        let id = hit.get("id").and_then(Value::as_str)?;
        let label = hit
            .get("label")
            .and_then(Value::as_str)
            .unwrap_or(id)
            .to_string();
        out.push((EntityId::new(id).ok()?, label));
    }
    Some(out)
}

pub(crate) fn parse_entity_label(payload: &Value, id: &EntityId) -> String {
    payload
        .get("entities")
        .and_then(|e| e.get(id.as_str()))
        .and_then(|e| e.get("labels"))
        .and_then(|l| l.get("en"))
        .and_then(|l| l.get("value"))
        .and_then(Value::as_str)
        .unwrap_or(id.as_str())
        .to_string()
}

pub(crate) fn parse_entity_claims(payload: &Value, id: &EntityId) -> Vec<Triple> {
    let mut triples = Vec::new();
    let claims = payload
        .get("entities")
        .and_then(|e| e.get(id.as_str()))
        .and_then(|e| e.get("claims"))
        .and_then(Value::as_object);
    if let Some(claims) = claims {
        for (property, statements) in claims {
            let Some(statements) = statements.as_array() else {
                continue;
            };
            for statement in statements {
                let object = statement
                    .get("mainsnak")
                    .and_then(|s| s.get("datavalue"))
                    .and_then(|d| d.get("value"))
                    .and_then(|v| v.get("id"))
                    .and_then(Value::as_str);
                if let Some(object) = object {
                    if let Ok(object) = EntityId::new(object) {
                        triples.push(Triple {
                            subject: id.clone(),
                            relation: property.clone(),
                            object,
                        });
                    }
                }
            }
        }
    }
    triples.sort_by(|a, b| {
        natural_cmp(&a.relation, &b.relation)
            .then_with(|| natural_cmp(a.object.as_str(), b.object.as_str()))
    });
    triples.dedup();
    triples
}

fn percent_encode(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for byte in text.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            _ => out.push_str(&format!("%{byte:02X}")),
        }
    }
    out
}
