//! Table data model and dataset ingestion.
//!
//! Datasets are JSON Lines, one table per line:
//!
//! ```text
//! {"table_id": str, "n_rows": int, "n_cols": int,
//!  "cells": [{"row": int, "col": int, "text": str, "gold_entity": str|null}],
//!  "gold_labels": {"<col>": [str, ...]}}
//! ```
//!
//! Cells missing from the record become empty-text cells so the grid is
//! always dense. Tables are immutable after load and safe to share
//! read-only across pipeline workers.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
    #[error("table {table_id}: {message}")]
    Malformed { table_id: String, message: String },
    #[error("duplicate table id {0}")]
    DuplicateTable(String),
    #[error("vocabulary {path}: {message}")]
    Vocabulary { path: String, message: String },
    #[error("column {col} out of range for table {table_id} ({n_cols} columns)")]
    ColumnOutOfRange {
        table_id: String,
        col: usize,
        n_cols: usize,
    },
}

/// One cell of a table. `gold_entity` carries the ground-truth entity id
/// linked to the cell, when the dataset provides one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
    pub text: String,
    #[serde(default)]
    pub gold_entity: Option<String>,
}

impl Cell {
    pub fn empty(row: usize, col: usize) -> Self {
        Cell {
            row,
            col,
            text: String::new(),
            gold_entity: None,
        }
    }
}

/// A relational table with a dense cell grid and optional per-column gold
/// type sets. Fields are private so the grid invariants hold by
/// construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    table_id: String,
    n_rows: usize,
    n_cols: usize,
    cells: Vec<Cell>,
    gold_labels: BTreeMap<usize, BTreeSet<String>>,
}

impl Table {
    /// Builds a table from possibly-sparse cell records. Missing cells are
    /// filled with empty text; out-of-range or duplicate cells, empty gold
    /// ids, and invalid gold label sets are rejected.
    pub fn new(
        table_id: impl Into<String>,
        n_rows: usize,
        n_cols: usize,
        cells: Vec<Cell>,
        gold_labels: BTreeMap<usize, BTreeSet<String>>,
    ) -> Result<Self, TabularError> {
        let table_id = table_id.into();
        let malformed = |message: String| TabularError::Malformed {
            table_id: table_id.clone(),
            message,
        };

        let mut grid: Vec<Option<Cell>> = vec![None; n_rows * n_cols];
        for cell in cells {
            if cell.row >= n_rows || cell.col >= n_cols {
                return Err(malformed(format!(
                    "cell ({}, {}) lies outside the declared {}x{} grid",
                    cell.row, cell.col, n_rows, n_cols
                )));
            }
            if let Some(gold) = &cell.gold_entity {
                if gold.is_empty() {
                    return Err(malformed(format!(
                        "cell ({}, {}) has an empty gold_entity",
                        cell.row, cell.col
                    )));
                }
            }
            let slot = &mut grid[cell.row * n_cols + cell.col];
            if slot.is_some() {
                return Err(malformed(format!(
                    "duplicate cell record for ({}, {})",
                    cell.row, cell.col
                )));
            }
            *slot = Some(cell);
        }
        let cells = grid
            .into_iter()
            .enumerate()
            .map(|(idx, slot)| slot.unwrap_or_else(|| Cell::empty(idx / n_cols, idx % n_cols)))
            .collect();

        for (col, labels) in &gold_labels {
            if *col >= n_cols {
                return Err(malformed(format!(
                    "gold_labels references column {col} but the table has {n_cols} columns"
                )));
            }
            if labels.is_empty() {
                return Err(malformed(format!(
                    "gold label set for column {col} is empty"
                )));
            }
            if labels.iter().any(|l| l.is_empty()) {
                return Err(malformed(format!(
                    "gold label set for column {col} contains an empty label"
                )));
            }
        }

        Ok(Table {
            table_id,
            n_rows,
            n_cols,
            cells,
            gold_labels,
        })
    }

    pub fn table_id(&self) -> &str {
        &self.table_id
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        assert!(
            row < self.n_rows && col < self.n_cols,
            "cell index out of range"
        );
        &self.cells[row * self.n_cols + col]
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    /// Cells of one column, in row order.
    pub fn column(&self, col: usize) -> impl Iterator<Item = &Cell> {
        assert!(col < self.n_cols, "column index out of range");
        (0..self.n_rows).map(move |row| self.cell(row, col))
    }

    pub fn gold_labels(&self) -> &BTreeMap<usize, BTreeSet<String>> {
        &self.gold_labels
    }

    /// Columns that carry gold type annotations, ascending.
    pub fn labeled_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.gold_labels.keys().copied()
    }

    /// True when any cell of the table carries a gold entity link.
    pub fn has_gold_links(&self) -> bool {
        self.cells.iter().any(|c| c.gold_entity.is_some())
    }
}

/// A single-column CTA query: the table plus the column to annotate.
#[derive(Debug, Clone, Copy)]
pub struct ColumnQuery<'a> {
    table: &'a Table,
    target_col: usize,
}

impl<'a> ColumnQuery<'a> {
    pub fn new(table: &'a Table, target_col: usize) -> Result<Self, TabularError> {
        if target_col >= table.n_cols() {
            return Err(TabularError::ColumnOutOfRange {
                table_id: table.table_id().to_string(),
                col: target_col,
                n_cols: table.n_cols(),
            });
        }
        Ok(ColumnQuery { table, target_col })
    }

    pub fn table(&self) -> &'a Table {
        self.table
    }

    pub fn target_col(&self) -> usize {
        self.target_col
    }
}

/// The candidate label set inserted into prompts. Order is stable across
/// runs; prompt serialization depends on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<String>,
}

impl LabelVocabulary {
    pub fn from_labels(labels: Vec<String>) -> Result<Self, TabularError> {
        let vocabulary = |message: String| TabularError::Vocabulary {
            path: "<memory>".to_string(),
            message,
        };
        if labels.is_empty() {
            return Err(vocabulary("vocabulary is empty".to_string()));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(vocabulary("vocabulary contains an empty label".to_string()));
            }
            if !seen.insert(label.as_str()) {
                return Err(vocabulary(format!("duplicate label {label:?}")));
            }
        }
        Ok(LabelVocabulary { labels })
    }

    /// Loads one label per line, UTF-8. Duplicate or empty lines are errors.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, TabularError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| TabularError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let vocabulary = |message: String| TabularError::Vocabulary {
            path: path.display().to_string(),
            message,
        };
        let mut labels = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            let label = line.trim_end_matches('\r');
            if label.is_empty() {
                return Err(vocabulary(format!("empty label at line {}", idx + 1)));
            }
            if !seen.insert(label.to_string()) {
                return Err(vocabulary(format!(
                    "duplicate label {:?} at line {}",
                    label,
                    idx + 1
                )));
            }
            labels.push(label.to_string());
        }
        if labels.is_empty() {
            return Err(vocabulary("vocabulary is empty".to_string()));
        }
        Ok(LabelVocabulary { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }
}

/// On-disk dataset formats. Only JSON Lines is defined today; the tag keeps
/// the loader signature stable if more formats appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Jsonl,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRecord {
    table_id: String,
    n_rows: usize,
    n_cols: usize,
    cells: Vec<Cell>,
    #[serde(default)]
    gold_labels: BTreeMap<String, Vec<String>>,
}

/// Loads every table of a dataset file. The cell grid of each table is
/// dense after load; gold links and labels are attached where present.
pub fn load_dataset(
    path: impl AsRef<Path>,
    format: DatasetFormat,
) -> Result<Vec<Table>, TabularError> {
    let DatasetFormat::Jsonl = format;
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TabularError::Io {
        path: path.display().to_string(),
        source,
    })?;

    let mut tables = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TableRecord =
            serde_json::from_str(line).map_err(|err| TabularError::Record {
                path: path.display().to_string(),
                line: idx + 1,
                message: err.to_string(),
            })?;
        if !seen_ids.insert(record.table_id.clone()) {
            return Err(TabularError::DuplicateTable(record.table_id));
        }
        tables.push(table_from_record(record)?);
    }
    Ok(tables)
}

fn table_from_record(record: TableRecord) -> Result<Table, TabularError> {
    let mut gold_labels = BTreeMap::new();
    for (col, labels) in record.gold_labels {
        let col: usize = col.parse().map_err(|_| TabularError::Malformed {
            table_id: record.table_id.clone(),
            message: format!("gold_labels key {col:?} is not a column index"),
        })?;
        gold_labels.insert(col, labels.into_iter().collect::<BTreeSet<_>>());
    }
    Table::new(
        record.table_id,
        record.n_rows,
        record.n_cols,
        record.cells,
        gold_labels,
    )
}

/// Writes tables back out in the dataset format. `load_dataset` composed
/// with this function is lossless for text, gold links, and labels.
pub fn write_dataset(tables: &[Table], path: impl AsRef<Path>) -> Result<(), TabularError> {
    let path = path.as_ref();
    let mut out = String::new();
    for table in tables {
        let record = TableRecord {
            table_id: table.table_id().to_string(),
            n_rows: table.n_rows(),
            n_cols: table.n_cols(),
            cells: table.cells().to_vec(),
            gold_labels: table
                .gold_labels()
                .iter()
                .map(|(col, labels)| (col.to_string(), labels.iter().cloned().collect()))
                .collect(),
        };
        out.push_str(&serde_json::to_string(&record).expect("table record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| TabularError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Serializes the queried table as CSV with the target column rotated into
/// position 0, so a prompt speaking of "the first column" always refers to
/// the query column. Remaining columns keep their relative order. Fields
/// containing comma, quote, or newline are quote-escaped per RFC 4180.
pub fn serialize_table_csv(query: &ColumnQuery<'_>, max_rows: Option<usize>) -> String {
    let table = query.table();
    let target = query.target_col();
    let order: Vec<usize> = std::iter::once(target)
        .chain((0..table.n_cols()).filter(|c| *c != target))
        .collect();
    let limit = max_rows.map_or(table.n_rows(), |m| table.n_rows().min(m));

    let mut rows = Vec::with_capacity(limit);
    for row in 0..limit {
        let fields: Vec<Cow<'_, str>> = order
            .iter()
            .map(|&col| csv_field(&table.cell(row, col).text))
            .collect();
        rows.push(fields.join(","));
    }
    rows.join("\n")
}

fn csv_field(text: &str) -> Cow<'_, str> {
    if text.contains(',') || text.contains('"') || text.contains('\n') || text.contains('\r') {
        Cow::Owned(format!("\"{}\"", text.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(text)
    }
}
