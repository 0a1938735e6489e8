//! End-to-end orchestration: annotate, link-report, and dump-prompts runs.
//!
//! Per labeled column the annotate flow is select → link → retrieve →
//! (process → augment, or vanilla on fallback) → complete → parse →
//! record, followed by scoring. Columns are immutable work items fanned
//! out over a configurable number of workers; results merge in column
//! order, so reports are invariant under scheduling. A prompt dump is
//! written alongside every report. On error the run aborts naming the
//! failing column, flushing whatever completed first.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use crate::augmentor::Mode;
use crate::augmentor::{build_prompt, AugmentError, PromptOptions, PromptRecord};
use crate::config::{ConfigError, KgSource, LlmSpec, RunConfig};
use crate::eval::{micro_f1_multi, micro_f1_single, ColumnRecord, EvalError, EvalReport};
use crate::kgstore::remote::RemoteKg;
use crate::kgstore::{KgBackend, KgError, KgSnapshot};
use crate::linking::{
    accuracy_counts, EntityLinker, GroundTruthLinker, LabelMatchLinker, LinkError, LinkRecord,
    LinkerKind, RemoteLinker,
};
use crate::llm::{
    parse_prediction, CompletionRequest, LiveBackend, LlmBackend, LlmError, MockBackend,
    ReplayBackend,
};
use crate::processor::{build_entity_labels, build_entity_triplets, ContextKind, ProcessError};
use crate::retriever::{retrieve, select_cells, RetrieveError};
use crate::tabular::{
    load_dataset, ColumnQuery, DatasetFormat, LabelVocabulary, Table, TabularError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    ConfigFile(#[from] ConfigError),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("column {col} of table {table_id}: {source}")]
    Column {
        table_id: String,
        col: usize,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("table {table_id}: {source}")]
    Table {
        table_id: String,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn at_column(table_id: &str, col: usize, source: PipelineError) -> PipelineError {
    PipelineError::Column {
        table_id: table_id.to_string(),
        col,
        source: Box::new(source),
    }
}

/// Result of an annotate run, with the paths of the artifacts written.
#[derive(Debug)]
pub struct AnnotateOutcome {
    pub report: EvalReport,
    pub report_path: PathBuf,
    pub prompt_dump_path: PathBuf,
}

/// Result of a link-report run.
#[derive(Debug)]
pub struct LinkReportSummary {
    pub path: PathBuf,
    pub records: usize,
    pub accuracy: Option<f64>,
}

/// The prompt dump lives next to the report: `report.json` →
/// `report.prompts.jsonl`.
pub fn prompt_dump_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("out")
        .to_string();
    out.with_file_name(format!("{stem}.prompts.jsonl"))
}

struct Backends {
    kg: Option<Arc<dyn KgBackend>>,
    linker: Option<Arc<dyn EntityLinker>>,
    llm: Option<Arc<dyn LlmBackend>>,
}

type KgHandles = (Option<Arc<dyn KgBackend>>, Option<Arc<KgSnapshot>>);

fn build_kg(config: &RunConfig) -> Result<KgHandles, PipelineError> {
    match &config.kg {
        None => Ok((None, None)),
        Some(KgSource::Snapshot(path)) => {
            let snapshot = Arc::new(KgSnapshot::load(path)?);
            Ok((Some(snapshot.clone()), Some(snapshot)))
        }
        Some(KgSource::Remote(remote)) => {
            let backend: Arc<dyn KgBackend> = Arc::new(RemoteKg::new(remote.clone()));
            Ok((Some(backend), None))
        }
    }
}

fn build_linker(
    config: &RunConfig,
    tables: &[Table],
    kg: &Option<Arc<dyn KgBackend>>,
    snapshot: &Option<Arc<KgSnapshot>>,
) -> Result<Arc<dyn EntityLinker>, PipelineError> {
    match config.linker {
        LinkerKind::GroundTruth => {
            if !tables.iter().any(Table::has_gold_links) {
                return Err(PipelineError::Config(
                    "the ground-truth linker requires a dataset with gold entity links".to_string(),
                ));
            }
            Ok(Arc::new(GroundTruthLinker))
        }
        LinkerKind::LabelMatch => {
            let snapshot = snapshot.clone().ok_or_else(|| {
                PipelineError::Config(
                    "the label-match linker requires a local KG snapshot (--kg <path>)".to_string(),
                )
            })?;
            Ok(Arc::new(LabelMatchLinker::new(snapshot)))
        }
        LinkerKind::Remote => {
            let backend = kg.clone().ok_or_else(|| {
                PipelineError::Config("the remote linker requires a KG backend (--kg)".to_string())
            })?;
            Ok(Arc::new(RemoteLinker::new(backend, config.search_limit)))
        }
    }
}

fn build_llm(config: &RunConfig) -> Result<Arc<dyn LlmBackend>, PipelineError> {
    let spec = config
        .llm
        .as_ref()
        .ok_or_else(|| PipelineError::Config("an LLM backend is required (--llm)".to_string()))?;
    let backend: Arc<dyn LlmBackend> = match spec {
        LlmSpec::Live(live) => Arc::new(LiveBackend::new(live.clone())?),
        LlmSpec::Replay(path) => Arc::new(ReplayBackend::load(path)?),
        LlmSpec::Mock(path) => Arc::new(MockBackend::from_lookup_file(path)?),
    };
    Ok(backend)
}

fn setup(
    config: &RunConfig,
    need_llm: bool,
) -> Result<(Vec<Table>, LabelVocabulary, Backends), PipelineError> {
    let tables = load_dataset(&config.dataset, DatasetFormat::Jsonl)?;
    let vocab = LabelVocabulary::load(&config.vocabulary)?;

    let needs_retrieval = config.context != ContextKind::None;
    let (kg, snapshot) = if needs_retrieval {
        let (kg, snapshot) = build_kg(config)?;
        if kg.is_none() {
            return Err(PipelineError::Config(
                "KG-augmented contexts require a KG backend (--kg)".to_string(),
            ));
        }
        (kg, snapshot)
    } else {
        (None, None)
    };

    let linker = if needs_retrieval {
        Some(build_linker(config, &tables, &kg, &snapshot)?)
    } else {
        None
    };

    let llm = if need_llm {
        Some(build_llm(config)?)
    } else {
        None
    };

    Ok((tables, vocab, Backends { kg, linker, llm }))
}

struct ColumnOutput {
    prompt_record: PromptRecord,
    record: Option<ColumnRecord>,
    link_counts: Option<(u64, u64)>,
}

fn process_column(
    table: &Table,
    col: usize,
    vocab: &LabelVocabulary,
    config: &RunConfig,
    backends: &Backends,
) -> Result<ColumnOutput, PipelineError> {
    let query = ColumnQuery::new(table, col)?;
    let opts = PromptOptions {
        max_rows: config.max_rows,
        correct_system_typo: config.correct_system_typo,
    };

    let (prompt, fallback_used, link_counts) = if config.context == ContextKind::None {
        (
            build_prompt(&query, vocab, None, config.mode, &opts)?,
            false,
            None,
        )
    } else {
        let linker = backends.linker.as_deref().expect("linker built in setup");
        let kg = backends.kg.as_deref().expect("kg built in setup");
        let result = retrieve(&query, linker, kg, config.fallback_policy)?;
        let cells = select_cells(&query);
        let counts = accuracy_counts(&result.outcomes, &cells)?;
        if result.fallback {
            (
                build_prompt(&query, vocab, None, config.mode, &opts)?,
                true,
                Some(counts),
            )
        } else {
            let ctx = match config.context {
                ContextKind::EntityLabels => build_entity_labels(&result, config.top_k)?,
                ContextKind::EntityTriplets => {
                    build_entity_triplets(&result, &config.instance_of_relation, config.top_k)?
                }
                ContextKind::None => unreachable!("handled above"),
            };
            if ctx.is_empty() {
                // Linked cells produced no context entries (e.g. no
                // instance-of edges): nothing to augment with.
                (
                    build_prompt(&query, vocab, None, config.mode, &opts)?,
                    true,
                    Some(counts),
                )
            } else {
                (
                    build_prompt(&query, vocab, Some(&ctx), config.mode, &opts)?,
                    false,
                    Some(counts),
                )
            }
        }
    };

    let prompt_record = PromptRecord::new(table.table_id(), col, &prompt);

    let record = match &backends.llm {
        Some(backend) => {
            let request = CompletionRequest {
                prompt: prompt.clone(),
                temperature: config.temperature,
                model: config.model.clone(),
            };
            let raw = backend.complete(&request)?;
            let prediction = parse_prediction(&raw, config.mode);
            Some(ColumnRecord {
                table_id: table.table_id().to_string(),
                col,
                gold: table.gold_labels()[&col].clone(),
                predicted: prediction.labels,
                context_kind: prompt.kind,
                fallback_used,
                parse_ok: prediction.parse_ok,
            })
        }
        None => None,
    };

    Ok(ColumnOutput {
        prompt_record,
        record,
        link_counts,
    })
}

/// Fans the labeled columns out over `jobs` workers. Slots keep work
/// order, so downstream artifacts are scheduling-invariant.
fn run_columns(
    tables: &[Table],
    vocab: &LabelVocabulary,
    config: &RunConfig,
    backends: &Backends,
) -> (Vec<ColumnOutput>, Option<PipelineError>) {
    let work: Vec<(usize, usize)> = tables
        .iter()
        .enumerate()
        .flat_map(|(idx, table)| {
            table
                .labeled_columns()
                .map(move |col| (idx, col))
                .collect::<Vec<_>>()
        })
        .collect();
    let n = work.len();

    let mut slots: Vec<Option<Result<ColumnOutput, PipelineError>>> = Vec::with_capacity(n);
    slots.resize_with(n, || None);
    let slots = Mutex::new(slots);
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let jobs = config.jobs.max(1).min(n.max(1));

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::Relaxed);
                if idx >= n {
                    break;
                }
                let (table_idx, col) = work[idx];
                let table = &tables[table_idx];
                let result = process_column(table, col, vocab, config, backends)
                    .map_err(|err| at_column(table.table_id(), col, err));
                let failed = result.is_err();
                slots.lock().unwrap()[idx] = Some(result);
                if failed {
                    abort.store(true, Ordering::Relaxed);
                }
            });
        }
    });

    let mut outputs = Vec::with_capacity(n);
    let mut first_error = None;
    for slot in slots.into_inner().unwrap() {
        match slot {
            Some(Ok(output)) => outputs.push(output),
            Some(Err(err)) if first_error.is_none() => first_error = Some(err),
            _ => {}
        }
    }
    (outputs, first_error)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("jsonl item serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn merged_el_accuracy(outputs: &[ColumnOutput]) -> Option<f64> {
    let mut matched = 0u64;
    let mut gold = 0u64;
    let mut saw_linking = false;
    for output in outputs {
        if let Some((m, g)) = output.link_counts {
            saw_linking = true;
            matched += m;
            gold += g;
        }
    }
    if !saw_linking || gold == 0 {
        return None;
    }
    Some(matched as f64 / gold as f64)
}

/// Runs the full annotate pipeline and writes the report plus the prompt
/// dump. On a column failure, completed columns are flushed before the
/// error propagates.
pub fn run_annotate(config: &RunConfig) -> Result<AnnotateOutcome, PipelineError> {
    let (tables, vocab, backends) = setup(config, true)?;
    if !tables.iter().any(|t| !t.gold_labels().is_empty()) {
        return Err(PipelineError::Config(
            "dataset has no labeled columns to annotate".to_string(),
        ));
    }

    let (outputs, error) = run_columns(&tables, &vocab, config, &backends);
    let dump_path = prompt_dump_path(&config.out);
    let prompt_records: Vec<&PromptRecord> = outputs.iter().map(|o| &o.prompt_record).collect();
    write_jsonl(&dump_path, &prompt_records)?;

    let records: Vec<ColumnRecord> = outputs.iter().filter_map(|o| o.record.clone()).collect();

    if let Some(error) = error {
        // Flush partial results before surfacing the failure.
        if !records.is_empty() {
            let mut report = score(config.mode, records)?;
            report.el_accuracy = merged_el_accuracy(&outputs);
            crate::eval::emit_report(&report, &config.out)?;
        }
        return Err(error);
    }

    let mut report = score(config.mode, records)?;
    report.el_accuracy = merged_el_accuracy(&outputs);
    crate::eval::emit_report(&report, &config.out)?;

    Ok(AnnotateOutcome {
        report,
        report_path: config.out.clone(),
        prompt_dump_path: dump_path,
    })
}

fn score(mode: Mode, records: Vec<ColumnRecord>) -> Result<EvalReport, PipelineError> {
    let report = match mode {
        Mode::Multi => micro_f1_multi(records)?,
        Mode::Single => micro_f1_single(records)?,
    };
    Ok(report)
}

/// Composes every prompt without calling any LLM and writes them as JSONL
/// to the configured output path.
pub fn dump_prompts(config: &RunConfig) -> Result<(PathBuf, usize), PipelineError> {
    let (tables, vocab, backends) = setup(config, false)?;
    let (outputs, error) = run_columns(&tables, &vocab, config, &backends);
    let prompt_records: Vec<&PromptRecord> = outputs.iter().map(|o| &o.prompt_record).collect();
    write_jsonl(&config.out, &prompt_records)?;
    if let Some(error) = error {
        return Err(error);
    }
    Ok((config.out.clone(), prompt_records.len()))
}

/// Links every non-empty cell of the dataset, writes the JSONL link
/// report, and returns the aggregate linking accuracy over gold-linked
/// cells.
pub fn run_link_report(config: &RunConfig) -> Result<LinkReportSummary, PipelineError> {
    let tables = load_dataset(&config.dataset, DatasetFormat::Jsonl)?;
    if !tables.iter().any(Table::has_gold_links) {
        return Err(PipelineError::Config(
            "link reports need a dataset with gold entity links".to_string(),
        ));
    }
    let (kg, snapshot) = build_kg(config)?;
    let linker = build_linker(config, &tables, &kg, &snapshot)?;

    let mut lines: Vec<LinkRecord> = Vec::new();
    let mut matched = 0u64;
    let mut gold = 0u64;
    for table in &tables {
        let cells: Vec<_> = (0..table.n_rows())
            .flat_map(|row| (0..table.n_cols()).map(move |col| table.cell(row, col)))
            .filter(|cell| !cell.text.is_empty())
            .cloned()
            .collect();
        if cells.is_empty() {
            continue;
        }
        if linker.kind() == LinkerKind::GroundTruth && !table.has_gold_links() {
            continue;
        }
        let outcomes = linker
            .link_cells(&cells)
            .map_err(|err| PipelineError::Table {
                table_id: table.table_id().to_string(),
                source: Box::new(err.into()),
            })?;
        let (m, g) = accuracy_counts(&outcomes, &cells).map_err(|err| PipelineError::Table {
            table_id: table.table_id().to_string(),
            source: Box::new(err.into()),
        })?;
        matched += m;
        gold += g;
        for (outcome, cell) in outcomes.iter().zip(&cells) {
            lines.push(LinkRecord::new(table.table_id(), outcome, cell));
        }
    }

    write_jsonl(&config.out, &lines)?;
    Ok(LinkReportSummary {
        path: config.out.clone(),
        records: lines.len(),
        accuracy: if gold > 0 {
            Some(matched as f64 / gold as f64)
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_dump_sits_next_to_the_report() {
        assert_eq!(
            prompt_dump_path(Path::new("out/report.json")),
            PathBuf::from("out/report.prompts.jsonl")
        );
        assert_eq!(
            prompt_dump_path(Path::new("report")),
            PathBuf::from("report.prompts.jsonl")
        );
    }
}
