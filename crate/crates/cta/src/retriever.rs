//! Column-level retrieval: select cells from the query column, link them,
//! and fetch entity labels plus one-hop neighborhoods from the KG.
//!
//! All cells of the column are selected (empty-text cells excluded).
//! Retrieval also resolves labels for every neighborhood object so that
//! downstream context building needs no further KG calls. When linking
//! produces no usable entities the result is flagged for the vanilla-prompt
//! fallback.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::kgstore::{EntityId, KgBackend, KgError, Triple};
use crate::linking::{EntityLinker, LinkError, LinkOutcome};
use crate::tabular::{Cell, ColumnQuery};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("linking column {col} of table {table_id}: {source}")]
    Link {
        table_id: String,
        col: usize,
        #[source]
        source: LinkError,
    },
    #[error("kg lookup for column {col} of table {table_id}: {source}")]
    Kg {
        table_id: String,
        col: usize,
        #[source]
        source: KgError,
    },
}

/// When to revert a column to the vanilla prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// Fall back only when no selected cell linked.
    #[default]
    AllFailed,
    /// Fall back as soon as any selected cell failed to link.
    AnyFailed,
}

/// Everything retrieved for one linked cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellKnowledge {
    pub row: usize,
    pub col: usize,
    pub entity: EntityId,
    pub label: String,
    /// Outgoing triples of `entity`; every subject equals `entity`.
    pub neighborhood: Vec<Triple>,
}

/// Output of the retriever for one column query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetrievalResult {
    pub table_id: String,
    pub target_col: usize,
    /// Number of cells selected for retrieval.
    pub selected_cells: usize,
    pub knowledge: Vec<CellKnowledge>,
    /// Labels for every entity seen during retrieval, neighborhood objects
    /// included, so context building is a pure function of this result.
    pub labels: BTreeMap<EntityId, String>,
    pub fallback: bool,
    /// Link outcomes for the selected cells, in row order.
    pub outcomes: Vec<LinkOutcome>,
}

impl RetrievalResult {
    pub fn label_of(&self, id: &EntityId) -> String {
        self.labels
            .get(id)
            .cloned()
            .unwrap_or_else(|| id.as_str().to_string())
    }
}

/// All non-empty-text cells of the target column, in row order.
pub fn select_cells(query: &ColumnQuery<'_>) -> Vec<Cell> {
    query
        .table()
        .column(query.target_col())
        .filter(|cell| !cell.text.is_empty())
        .cloned()
        .collect()
}

/// Runs the retrieval stage for one column. Unlinked cells are omitted
/// from the knowledge list; the fallback flag is set per `policy`.
pub fn retrieve(
    query: &ColumnQuery<'_>,
    linker: &dyn EntityLinker,
    kg: &dyn KgBackend,
    policy: FallbackPolicy,
) -> Result<RetrievalResult, RetrieveError> {
    let table_id = query.table().table_id().to_string();
    let target_col = query.target_col();
    let cells = select_cells(query);

    if cells.is_empty() {
        return Ok(RetrievalResult {
            table_id,
            target_col,
            selected_cells: 0,
            knowledge: Vec::new(),
            labels: BTreeMap::new(),
            fallback: true,
            outcomes: Vec::new(),
        });
    }

    let outcomes = linker
        .link_cells(&cells)
        .map_err(|source| RetrieveError::Link {
            table_id: table_id.clone(),
            col: target_col,
            source,
        })?;

    let kg_err = |source: KgError| RetrieveError::Kg {
        table_id: table_id.clone(),
        col: target_col,
        source,
    };

    let mut labels: BTreeMap<EntityId, String> = BTreeMap::new();
    let mut hop_cache: BTreeMap<EntityId, Vec<Triple>> = BTreeMap::new();
    let mut knowledge = Vec::new();
    for outcome in &outcomes {
        let Some(entity) = &outcome.linked else {
            continue;
        };
        if !labels.contains_key(entity) {
            let label = kg.entity_label(entity).map_err(kg_err)?;
            labels.insert(entity.clone(), label);
        }
        if !hop_cache.contains_key(entity) {
            let hops = kg.one_hop(entity).map_err(kg_err)?;
            for triple in &hops {
                if !labels.contains_key(&triple.object) {
                    let label = kg.entity_label(&triple.object).map_err(kg_err)?;
                    labels.insert(triple.object.clone(), label);
                }
            }
            hop_cache.insert(entity.clone(), hops);
        }
        knowledge.push(CellKnowledge {
            row: outcome.row,
            col: outcome.col,
            entity: entity.clone(),
            label: labels[entity].clone(),
            neighborhood: hop_cache[entity].clone(),
        });
    }

    let fallback = match policy {
        FallbackPolicy::AllFailed => knowledge.is_empty(),
        FallbackPolicy::AnyFailed => knowledge.len() < cells.len(),
    };

    Ok(RetrievalResult {
        table_id,
        target_col,
        selected_cells: cells.len(),
        knowledge,
        labels,
        fallback,
        outcomes,
    })
}
