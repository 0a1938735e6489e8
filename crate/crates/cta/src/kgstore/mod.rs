//! Knowledge-graph access.
//!
//! Two backends expose the same surface behind [`KgBackend`]: an in-memory
//! [`KgSnapshot`] loaded from a TSV dump subset, and a [`remote`] HTTP
//! client speaking the MediaWiki-style search/entity actions. Both provide
//! label lookup, one-hop neighborhood retrieval, and mention search.
//!
//! Snapshot TSV lines (`#`-prefixed comment lines are ignored):
//!
//! ```text
//! L<TAB>id<TAB>label
//! A<TAB>id<TAB>alias
//! T<TAB>subject<TAB>relation<TAB>object
//! ```

pub mod remote;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Snapshot {
        path: String,
        line: usize,
        message: String,
    },
    #[error("entity ids must be non-empty")]
    EmptyEntityId,
    #[error("invalid search: {0}")]
    InvalidSearch(String),
    #[error("transport failure after {attempts} attempts for {url}: {message}")]
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("unexpected response from {url}: {message}")]
    Protocol { url: String, message: String },
}

/// Opaque entity identifier (a Q-id or page-id string). Non-empty,
/// compared byte-wise for equality; ordered naturally where ranking
/// matters (see [`natural_cmp`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self, KgError> {
        let id = id.into();
        if id.is_empty() {
            return Err(KgError::EmptyEntityId);
        }
        Ok(EntityId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A directed KG edge in (subject, relation, object) form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: String,
    pub object: EntityId,
}

/// Compares identifier strings digit-run-aware, so `Q90` sorts before
/// `Q830` and `P9` before `P10`. Used for every deterministic id ordering
/// exposed by the store.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let mut ia = a.chars().peekable();
    let mut ib = b.chars().peekable();
    loop {
        match (ia.peek().copied(), ib.peek().copied()) {
            (None, None) => return a.cmp(b),
            (None, Some(_)) => return Ordering::Less,
            (Some(_), None) => return Ordering::Greater,
            (Some(ca), Some(cb)) => {
                if ca.is_ascii_digit() && cb.is_ascii_digit() {
                    let run_a = take_digits(&mut ia);
                    let run_b = take_digits(&mut ib);
                    let trimmed_a = run_a.trim_start_matches('0');
                    let trimmed_b = run_b.trim_start_matches('0');
                    let ord = trimmed_a
                        .len()
                        .cmp(&trimmed_b.len())
                        .then_with(|| trimmed_a.cmp(trimmed_b));
                    if ord != Ordering::Equal {
                        return ord;
                    }
                } else {
                    if ca != cb {
                        return ca.cmp(&cb);
                    }
                    ia.next();
                    ib.next();
                }
            }
        }
    }
}

fn take_digits(iter: &mut std::iter::Peekable<std::str::Chars<'_>>) -> String {
    let mut run = String::new();
    while let Some(c) = iter.peek() {
        if c.is_ascii_digit() {
            run.push(*c);
            iter.next();
        } else {
            break;
        }
    }
    run
}

fn natural_cmp_ids(a: &EntityId, b: &EntityId) -> Ordering {
    natural_cmp(a.as_str(), b.as_str())
}

/// Mention/label normalization used by search and label matching:
/// Unicode NFC, case fold, whitespace collapsed to single spaces.
pub fn normalize_mention(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let folded = caseless::default_case_fold_str(&nfc);
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Common KG surface shared by the local snapshot and the remote client.
/// All methods are read-only and safe to call concurrently.
pub trait KgBackend: Send + Sync {
    /// Canonical label of an entity; the raw id string when no label is known.
    fn entity_label(&self, id: &EntityId) -> Result<String, KgError>;

    /// All outgoing triples of `id`, sorted by relation then object
    /// ([`natural_cmp`]); empty when none are stored.
    fn one_hop(&self, id: &EntityId) -> Result<Vec<Triple>, KgError>;

    /// Up to `limit` candidate entities for a mention, best first.
    fn search_entities(
        &self,
        mention: &str,
        limit: usize,
    ) -> Result<Vec<(EntityId, String)>, KgError>;
}

/// In-memory KG subset: labels, aliases, and outgoing edges. Immutable
/// after load; concurrent readers are fine.
#[derive(Debug, Clone, Default)]
pub struct KgSnapshot {
    labels: BTreeMap<EntityId, String>,
    aliases: BTreeMap<EntityId, Vec<String>>,
    out_edges: BTreeMap<EntityId, Vec<Triple>>,
    /// normalized label/alias -> ids carrying it
    name_index: BTreeMap<String, BTreeSet<EntityId>>,
}

impl KgSnapshot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses the TSV snapshot format. Duplicate triples collapse to one;
    /// conflicting label assignments are an error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| KgError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self, KgError> {
        let mut snapshot = KgSnapshot::new();
        let fail = |line: usize, message: String| KgError::Snapshot {
            path: source_name.to_string(),
            line,
            message,
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            match fields[0] {
                "L" => {
                    let [_, id, label] = fields[..] else {
                        return Err(fail(line_no, "label lines take exactly 2 fields".into()));
                    };
                    if id.is_empty() || label.is_empty() {
                        return Err(fail(line_no, "empty field in label line".into()));
                    }
                    let id = EntityId::new(id)?;
                    if let Some(existing) = snapshot.labels.get(&id) {
                        if existing != label {
                            return Err(fail(
                                line_no,
                                format!("conflicting labels for {}: {existing:?} vs {label:?}", id),
                            ));
                        }
                    } else {
                        snapshot.labels.insert(id, label.to_string());
                    }
                }
                "A" => {
                    let [_, id, alias] = fields[..] else {
                        return Err(fail(line_no, "alias lines take exactly 2 fields".into()));
                    };
                    if id.is_empty() || alias.is_empty() {
                        return Err(fail(line_no, "empty field in alias line".into()));
                    }
                    let id = EntityId::new(id)?;
                    let aliases = snapshot.aliases.entry(id).or_default();
                    if !aliases.iter().any(|a| a == alias) {
                        aliases.push(alias.to_string());
                    }
                }
                "T" => {
                    let [_, subject, relation, object] = fields[..] else {
                        return Err(fail(line_no, "triple lines take exactly 3 fields".into()));
                    };
                    if subject.is_empty() || relation.is_empty() || object.is_empty() {
                        return Err(fail(line_no, "empty field in triple line".into()));
                    }
                    let triple = Triple {
                        subject: EntityId::new(subject)?,
                        relation: relation.to_string(),
                        object: EntityId::new(object)?,
                    };
                    let edges = snapshot
                        .out_edges
                        .entry(triple.subject.clone())
                        .or_default();
                    if !edges.contains(&triple) {
                        edges.push(triple);
                    }
                }
                tag => return Err(fail(line_no, format!("unknown record tag {tag:?}"))),
            }
        }
        snapshot.finish();
        Ok(snapshot)
    }

    fn finish(&mut self) {
        for edges in self.out_edges.values_mut() {
            edges.sort_by(|a, b| {
                natural_cmp(&a.relation, &b.relation)
                    .then_with(|| natural_cmp_ids(&a.object, &b.object))
            });
        }
        self.name_index.clear();
        for (id, label) in &self.labels {
            self.name_index
                .entry(normalize_mention(label))
                .or_default()
                .insert(id.clone());
        }
        for (id, aliases) in &self.aliases {
            for alias in aliases {
                self.name_index
                    .entry(normalize_mention(alias))
                    .or_default()
                    .insert(id.clone());
            }
        }
    }

    /// Builder used by fixtures and tests.
    pub fn insert_entity(&mut self, id: EntityId, label: impl Into<String>, aliases: Vec<String>) {
        self.labels.insert(id.clone(), label.into());
        if !aliases.is_empty() {
            self.aliases.insert(id, aliases);
        }
        self.finish();
    }

    pub fn insert_triple(&mut self, triple: Triple) {
        let edges = self.out_edges.entry(triple.subject.clone()).or_default();
        if !edges.contains(&triple) {
            edges.push(triple);
        }
        self.finish();
    }

    pub fn labels(&self) -> &BTreeMap<EntityId, String> {
        &self.labels
    }

    pub fn n_triples(&self) -> usize {
        self.out_edges.values().map(Vec::len).sum()
    }

    pub fn label_of(&self, id: &EntityId) -> String {
        self.labels
            .get(id)
            .cloned()
            .unwrap_or_else(|| id.as_str().to_string())
    }

    pub fn edges_of(&self, id: &EntityId) -> Vec<Triple> {
        self.out_edges.get(id).cloned().unwrap_or_default()
    }

    /// Top candidate whose normalized label or alias equals the normalized
    /// mention; natural id order breaks ties. The label-match linker's
    /// primitive.
    pub fn lookup_exact(&self, mention: &str) -> Option<EntityId> {
        let key = normalize_mention(mention);
        self.name_index.get(&key).and_then(|ids| {
            let mut sorted: Vec<&EntityId> = ids.iter().collect();
            sorted.sort_by(|a, b| natural_cmp_ids(a, b));
            sorted.first().map(|id| (*id).clone())
        })
    }

    fn search_local(
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
        let key = normalize_mention(mention);
        if key.is_empty() {
            return Ok(Vec::new());
        }

        let mut exact: Vec<EntityId> = self
            .name_index
            .get(&key)
            .map(|ids| ids.iter().cloned().collect())
            .unwrap_or_default();
        exact.sort_by(natural_cmp_ids);

        let mut prefix: Vec<EntityId> = Vec::new();
        let mut seen: BTreeSet<EntityId> = exact.iter().cloned().collect();
        for (name, ids) in self.name_index.range(key.clone()..) {
            if !name.starts_with(&key) {
                break;
            }
            for id in ids {
                if seen.insert(id.clone()) {
                    prefix.push(id.clone());
                }
            }
        }
        prefix.sort_by(natural_cmp_ids);

        Ok(exact
            .into_iter()
            .chain(prefix)
            .take(limit)
            .map(|id| {
                let label = self.label_of(&id);
                (id, label)
            })
            .collect())
    }
}

impl KgBackend for KgSnapshot {
    fn entity_label(&self, id: &EntityId) -> Result<String, KgError> {
        Ok(self.label_of(id))
    }

    fn one_hop(&self, id: &EntityId) -> Result<Vec<Triple>, KgError> {
        Ok(self.edges_of(id))
    }

    fn search_entities(
        &self,
        mention: &str,
        limit: usize,
    ) -> Result<Vec<(EntityId, String)>, KgError> {
        self.search_local(mention, limit)
    }
}
