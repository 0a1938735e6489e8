//! KG-Linker implementations: map entity mentions (cell strings) to their
//! referent entities.
//!
//! Three linkers are provided behind [`EntityLinker`]: a ground-truth
//! linker copying the dataset's gold links, a label-match linker resolving
//! mentions against the local snapshot's labels and aliases, and a remote
//! linker taking the top candidate from a search backend. Callers can plug
//! in their own implementation of the trait.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::kgstore::{EntityId, KgBackend, KgError, KgSnapshot};
use crate::tabular::Cell;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("link_cells requires a non-empty cell list")]
    EmptyInput,
    #[error("cell ({row}, {col}) has empty text; filter empty cells before linking")]
    EmptyMention { row: usize, col: usize },
    #[error("ground-truth linker found no gold entity links in the input")]
    NoGoldLinks,
    #[error("outcomes and cells are misaligned: {0}")]
    Misaligned(String),
    #[error(transparent)]
    Backend(#[from] KgError),
}

/// Result of linking one cell. `linked` is absent iff no referent was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkOutcome {
    pub row: usize,
    pub col: usize,
    pub mention: String,
    pub linked: Option<EntityId>,
}

/// The built-in linker families, mirroring the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkerKind {
    GroundTruth,
    LabelMatch,
    Remote,
}

/// A KG-Linker: takes entity mentions, returns referent entity ids.
/// Implementations must be deterministic given their backend state.
pub trait EntityLinker: Send + Sync {
    fn kind(&self) -> LinkerKind;

    /// One outcome per input cell, order preserved. Input cells must be
    /// non-empty and already filtered of empty-text cells.
    fn link_cells(&self, cells: &[Cell]) -> Result<Vec<LinkOutcome>, LinkError>;
}

fn check_input(cells: &[Cell]) -> Result<(), LinkError> {
    if cells.is_empty() {
        return Err(LinkError::EmptyInput);
    }
    for cell in cells {
        if cell.text.is_empty() {
            return Err(LinkError::EmptyMention {
                row: cell.row,
                col: cell.col,
            });
        }
    }
    Ok(())
}

/// Copies the dataset's gold entity ids. Cells without a gold link stay
/// unlinked; an input carrying no gold links at all is an error, since the
/// linker has nothing to copy.
#[derive(Debug, Default, Clone, Copy)]
pub struct GroundTruthLinker;

impl EntityLinker for GroundTruthLinker {
    fn kind(&self) -> LinkerKind {
        LinkerKind::GroundTruth
    }

    fn link_cells(&self, cells: &[Cell]) -> Result<Vec<LinkOutcome>, LinkError> {
        check_input(cells)?;
        if cells.iter().all(|c| c.gold_entity.is_none()) {
            return Err(LinkError::NoGoldLinks);
        }
        cells
            .iter()
            .map(|cell| {
                let linked = match &cell.gold_entity {
                    Some(gold) => Some(EntityId::new(gold.clone())?),
                    None => None,
                };
                Ok(LinkOutcome {
                    row: cell.row,
                    col: cell.col,
                    mention: cell.text.clone(),
                    linked,
                })
            })
            .collect()
    }
}

/// Links a mention iff its normalized form equals a normalized label or
/// alias in the local snapshot; the top search candidate is the referent.
pub struct LabelMatchLinker {
    snapshot: Arc<KgSnapshot>,
}

impl LabelMatchLinker {
    pub fn new(snapshot: Arc<KgSnapshot>) -> Self {
        LabelMatchLinker { snapshot }
    }
}

impl EntityLinker for LabelMatchLinker {
    fn kind(&self) -> LinkerKind {
        LinkerKind::LabelMatch
    }

    fn link_cells(&self, cells: &[Cell]) -> Result<Vec<LinkOutcome>, LinkError> {
        check_input(cells)?;
        let mut memo: HashMap<&str, Option<EntityId>> = HashMap::new();
        Ok(cells
            .iter()
            .map(|cell| {
                let linked = memo
                    .entry(cell.text.as_str())
                    .or_insert_with(|| self.snapshot.lookup_exact(&cell.text))
                    .clone();
                LinkOutcome {
                    row: cell.row,
                    col: cell.col,
                    mention: cell.text.clone(),
                    linked,
                }
            })
            .collect())
    }
}

/// Queries a search backend (local or remote) and takes the top candidate
/// as the referent. Covers external linkers exposed over the remote
/// contract.
pub struct RemoteLinker {
    backend: Arc<dyn KgBackend>,
    search_limit: usize,
}

impl RemoteLinker {
    pub fn new(backend: Arc<dyn KgBackend>, search_limit: usize) -> Self {
        RemoteLinker {
            backend,
            search_limit: search_limit.max(1),
        }
    }
}

impl EntityLinker for RemoteLinker {
    fn kind(&self) -> LinkerKind {
        LinkerKind::Remote
    }

    fn link_cells(&self, cells: &[Cell]) -> Result<Vec<LinkOutcome>, LinkError> {
        check_input(cells)?;
        let mut memo: HashMap<&str, Option<EntityId>> = HashMap::new();
        let mut outcomes = Vec::with_capacity(cells.len());
        for cell in cells {
            let linked = match memo.get(cell.text.as_str()) {
                Some(cached) => cached.clone(),
                None => {
                    let top = self
                        .backend
                        .search_entities(&cell.text, self.search_limit)?
                        .into_iter()
                        .next()
                        .map(|(id, _)| id);
                    memo.insert(cell.text.as_str(), top.clone());
                    top
                }
            };
            outcomes.push(LinkOutcome {
                row: cell.row,
                col: cell.col,
                mention: cell.text.clone(),
                linked,
            });
        }
        Ok(outcomes)
    }
}

/// Fraction of gold-linked cells whose outcome matches the gold id.
/// `None` when no cell carries a gold link (undefined, distinct from 0).
pub fn linking_accuracy(
    outcomes: &[LinkOutcome],
    cells: &[Cell],
) -> Result<Option<f64>, LinkError> {
    let (matched, gold) = accuracy_counts(outcomes, cells)?;
    if gold == 0 {
        return Ok(None);
    }
    Ok(Some(matched as f64 / gold as f64))
}

/// (matched, gold-cell) counts, mergeable across columns.
pub fn accuracy_counts(outcomes: &[LinkOutcome], cells: &[Cell]) -> Result<(u64, u64), LinkError> {
    if outcomes.len() != cells.len() {
        return Err(LinkError::Misaligned(format!(
            "{} outcomes vs {} cells",
            outcomes.len(),
            cells.len()
        )));
    }
    let mut gold = 0u64;
    let mut matched = 0u64;
    for (outcome, cell) in outcomes.iter().zip(cells) {
        if outcome.row != cell.row || outcome.col != cell.col {
            return Err(LinkError::Misaligned(format!(
                "outcome ({}, {}) paired with cell ({}, {})",
                outcome.row, outcome.col, cell.row, cell.col
            )));
        }
        if let Some(gold_id) = &cell.gold_entity {
            gold += 1;
            if outcome.linked.as_ref().map(EntityId::as_str) == Some(gold_id.as_str()) {
                matched += 1;
            }
        }
    }
    Ok((matched, gold))
}

/// One line of the JSONL link report.
#[derive(Debug, Clone, Serialize)]
pub struct LinkRecord {
    pub table_id: String,
    pub row: usize,
    pub col: usize,
    pub mention: String,
    pub linked: Option<String>,
    pub gold: Option<String>,
}

impl LinkRecord {
    pub fn new(table_id: &str, outcome: &LinkOutcome, cell: &Cell) -> Self {
        LinkRecord {
            table_id: table_id.to_string(),
            row: outcome.row,
            col: outcome.col,
            mention: outcome.mention.clone(),
            linked: outcome.linked.as_ref().map(|id| id.as_str().to_string()),
            gold: cell.gold_entity.clone(),
        }
    }
}
