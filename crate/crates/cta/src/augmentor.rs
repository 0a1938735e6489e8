//! Prompt composition: serializes a column context into the KG-Context
//! sentence and builds the vanilla or KG-augmented prompt.
//!
//! The user message is assembled from fixed template fragments; the table
//! is serialized as CSV inside triple-backtick fences with the query
//! column rotated to position 0, and the label vocabulary is rendered as a
//! comma-separated list. Augmented prompts carry the KG-Context as step 2;
//! vanilla prompts omit it and renumber the remaining steps contiguously.
//! Output is byte-stable across runs and platforms (newline = `\n`).

use serde::Serialize;
use thiserror::Error;

use crate::processor::{ColumnContext, ContextKind};
use crate::tabular::{serialize_table_csv, ColumnQuery, LabelVocabulary};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("cannot serialize an empty column context; the caller should have fallen back")]
    EmptyContext,
    #[error("cannot serialize a context of kind none")]
    NoContextKind,
}

/// Annotation mode: one type per column or a label set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Multi,
    Single,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Multi => "multi",
            Mode::Single => "single",
        }
    }
}

/// A composed chat prompt ready for a completion backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
    pub mode: Mode,
    pub kind: ContextKind,
}

/// Knobs for prompt construction.
#[derive(Debug, Clone, Default)]
pub struct PromptOptions {
    /// Cap on serialized table rows; none serializes the whole table.
    pub max_rows: Option<usize>,
    /// The published system message misspells "designed"; it is reproduced
    /// verbatim unless this flag corrects it.
    pub correct_system_typo: bool,
}

// The system message is reproduced verbatim, typo included.
const SYSTEM_MESSAGE_VERBATIM: &str = "Be a helpful, accurate assistant for data discovery and exploration desiged to output valid JSON in the format {'type': []}";
const SYSTEM_MESSAGE_CORRECTED: &str = "Be a helpful, accurate assistant for data discovery and exploration designed to output valid JSON in the format {'type': []}";

const TABLE_INTRO: &str = "Consider this table given in Comma-separated Values format:";

const STEP_LOOK: &str = "Look at the cells in the first column of the above table. ";
const STEP_CONTEXT_PREFIX: &str = "Consider this information carefully: ";
const STEP_CHOOSE_SINGLE: &str = "Choose only one valid type from the given list of types. Check that the type MUST be in the list. Give the answer in valid JSON format.";
const STEP_MARK_MULTI: &str = "Mark each type in the given list with 0 or 1. Mark a type with 1 if it can better represent all cells of the first column. Mark a type with 0 otherwise. ";
const STEP_LIST_MULTI: &str = "Give a list of types that you have marked 1 in the previous step. Check that the types MUST be in the list. Give the answer in valid JSON format.";

const CONTEXT_INTRO_TRIPLETS: &str =
    "Cells in this column are instances of the following wikidata entities: ";
// The Entity-Labels sentence mirrors the Entity-Triplets structure; it is
// kept in one constant so the wording can be adjusted without code changes.
const CONTEXT_INTRO_LABELS: &str =
    "Cells in this column are linked to the following wikidata entities: ";

/// The KG-Context sentence, e.g. `Cells in this column are instances of
/// the following wikidata entities: human (6 cells).`
pub fn serialize_context(ctx: &ColumnContext) -> Result<String, AugmentError> {
    let intro = match ctx.kind {
        ContextKind::EntityTriplets => CONTEXT_INTRO_TRIPLETS,
        ContextKind::EntityLabels => CONTEXT_INTRO_LABELS,
        ContextKind::None => return Err(AugmentError::NoContextKind),
    };
    if ctx.entries.is_empty() {
        return Err(AugmentError::EmptyContext);
    }
    let body = ctx
        .entries
        .iter()
        .map(|entry| {
            let unit = if entry.cells == 1 { "cell" } else { "cells" };
            format!("{} ({} {})", entry.label, entry.cells, unit)
        })
        .collect::<Vec<_>>()
        .join(", ");
    Ok(format!("{intro}{body}."))
}

/// Composes the prompt for one column query. `ctx` absent yields the
/// vanilla prompt; present, it must be non-empty.
pub fn build_prompt(
    query: &ColumnQuery<'_>,
    vocab: &LabelVocabulary,
    ctx: Option<&ColumnContext>,
    mode: Mode,
    opts: &PromptOptions,
) -> Result<Prompt, AugmentError> {
    let table_csv = serialize_table_csv(query, opts.max_rows);
    let types = vocab.labels().join(", ");

    let task_phrase = match mode {
        Mode::Single => "choose only one type",
        Mode::Multi => "choose one or multiple types",
    };

    let mut steps: Vec<String> = vec![STEP_LOOK.to_string()];
    if let Some(ctx) = ctx {
        steps.push(format!("{STEP_CONTEXT_PREFIX}{}", serialize_context(ctx)?));
    }
    match mode {
        Mode::Single => steps.push(STEP_CHOOSE_SINGLE.to_string()),
        Mode::Multi => {
            steps.push(STEP_MARK_MULTI.to_string());
            steps.push(STEP_LIST_MULTI.to_string());
        }
    }
    let numbered = steps
        .iter()
        .enumerate()
        .map(|(idx, step)| format!("{}. {}", idx + 1, step))
        .collect::<Vec<_>>()
        .join("\n");

    let table_block = if table_csv.is_empty() {
        "```\n```".to_string()
    } else {
        format!("```\n{table_csv}\n```")
    };

    let user = format!(
        "{TABLE_INTRO}\n{table_block}\nThere are a list of {n} valid types for each column: {types}. \
Your task is to {task_phrase} from the list to annotate the first column. \
Solve this task by following these steps: \n{numbered}",
        n = vocab.len(),
    );

    let system = if opts.correct_system_typo {
        SYSTEM_MESSAGE_CORRECTED
    } else {
        SYSTEM_MESSAGE_VERBATIM
    };

    Ok(Prompt {
        system: system.to_string(),
        user,
        mode,
        kind: ctx.map_or(ContextKind::None, |c| c.kind),
    })
}

/// One line of the prompt dump (JSONL), used for golden-file testing.
#[derive(Debug, Clone, Serialize)]
pub struct PromptRecord {
    pub table_id: String,
    pub col: usize,
    pub mode: Mode,
    pub kind: ContextKind,
    pub system: String,
    pub user: String,
}

impl PromptRecord {
    pub fn new(table_id: &str, col: usize, prompt: &Prompt) -> Self {
        PromptRecord {
            table_id: table_id.to_string(),
            col,
            mode: prompt.mode,
            kind: prompt.kind,
            system: prompt.system.clone(),
            user: prompt.user.clone(),
        }
    }
}
