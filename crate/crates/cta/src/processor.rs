//! Compresses retrieved cell-level knowledge into the two counted
//! column-level representations: Entity-Labels (canonical labels of the
//! linked entities) and Entity-Triplets (instance-of types of the linked
//! entities). Counts are cells, not triples: a cell with several distinct
//! types contributes one to each type's count.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgstore::{natural_cmp, EntityId};
use crate::retriever::RetrievalResult;

#[derive(Debug, Error)]
pub enum ProcessError {
    #[error("column context requested for a fallback retrieval result")]
    FallbackResult,
}

/// Which column-level representation a context (or prompt) carries.
/// `None` is the vanilla baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    #[default]
    None,
    EntityLabels,
    EntityTriplets,
}

impl ContextKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContextKind::None => "none",
            ContextKind::EntityLabels => "entity_labels",
            ContextKind::EntityTriplets => "entity_triplets",
        }
    }
}

/// One context entry: an entity (or type entity), its display label, and
/// the number of cells it covers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextEntry {
    pub entity: EntityId,
    pub label: String,
    pub cells: usize,
}

/// Aggregated column-level knowledge. Entries are sorted by cell count
/// descending, then display label ascending; entries sharing a display
/// label stay separate, keyed by entity id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnContext {
    pub kind: ContextKind,
    pub entries: Vec<ContextEntry>,
}

impl ColumnContext {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// (label, count) view used by prompt serialization and tests.
    pub fn counted_labels(&self) -> Vec<(&str, usize)> {
        self.entries
            .iter()
            .map(|e| (e.label.as_str(), e.cells))
            .collect()
    }
}

/// One entry per distinct linked entity; the count is the number of cells
/// linked to it.
pub fn build_entity_labels(
    result: &RetrievalResult,
    top_k: Option<usize>,
) -> Result<ColumnContext, ProcessError> {
    if result.fallback {
        return Err(ProcessError::FallbackResult);
    }
    let mut counts: BTreeMap<EntityId, usize> = BTreeMap::new();
    for ck in &result.knowledge {
        *counts.entry(ck.entity.clone()).or_default() += 1;
    }
    Ok(finish(ContextKind::EntityLabels, counts, result, top_k))
}

/// One entry per distinct type entity reachable over `instance_of_relation`;
/// the count is the number of cells whose type set contains it. Cells with
/// no instance-of edge contribute nothing.
pub fn build_entity_triplets(
    result: &RetrievalResult,
    instance_of_relation: &str,
    top_k: Option<usize>,
) -> Result<ColumnContext, ProcessError> {
    if result.fallback {
        return Err(ProcessError::FallbackResult);
    }
    let mut counts: BTreeMap<EntityId, usize> = BTreeMap::new();
    for ck in &result.knowledge {
        let types: BTreeSet<&EntityId> = ck
            .neighborhood
            .iter()
            .filter(|t| t.relation == instance_of_relation)
            .map(|t| &t.object)
            .collect();
        for ty in types {
            *counts.entry(ty.clone()).or_default() += 1;
        }
    }
    Ok(finish(ContextKind::EntityTriplets, counts, result, top_k))
}

fn finish(
    kind: ContextKind,
    counts: BTreeMap<EntityId, usize>,
    result: &RetrievalResult,
    top_k: Option<usize>,
) -> ColumnContext {
    let mut entries: Vec<ContextEntry> = counts
        .into_iter()
        .map(|(entity, cells)| ContextEntry {
            label: result.label_of(&entity),
            entity,
            cells,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.cells
            .cmp(&a.cells)
            .then_with(|| a.label.cmp(&b.label))
            .then_with(|| natural_cmp(a.entity.as_str(), b.entity.as_str()))
    });
    if let Some(k) = top_k {
        entries.truncate(k);
    }
    ColumnContext { kind, entries }
}
