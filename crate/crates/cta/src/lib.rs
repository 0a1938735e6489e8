//! Column type annotation (CTA) with knowledge-graph-augmented prompts.
//!
//! The pipeline links table-cell mentions to entities in a knowledge
//! graph, compresses the retrieved facts into counted column-level
//! contexts, injects them into LLM prompts, and scores the predictions
//! against gold labels. Each stage is usable on its own:
//!
//! - [`tabular`]: table model, dataset ingestion, CSV serialization
//! - [`kgstore`]: local snapshot store and remote KG client
//! - [`linking`]: ground-truth, label-match, and remote entity linkers
//! - [`retriever`]: cell selection, linking, one-hop retrieval, fallback
//! - [`processor`]: Entity-Labels / Entity-Triplets context building
//! - [`augmentor`]: KG-Context serialization and prompt composition
//! - [`llm`]: live, replay, and mock completion backends plus parsing
//! - [`eval`]: micro-F1 scoring and run reports
//! - [`pipeline`], [`config`], [`cli`]: orchestration and the CLI
//! - [`fixtures`]: deterministic desk-scale corpus generator and the
//!   independent oracle used to cross-check end-to-end runs

pub mod augmentor;
pub mod cli;
pub mod config;
pub mod eval;
pub mod fixtures;
pub mod kgstore;
pub mod linking;
pub mod llm;
pub mod pipeline;
pub mod processor;
pub mod retriever;
pub mod tabular;

pub use augmentor::{build_prompt, serialize_context, Mode, Prompt, PromptOptions};
pub use config::{KgSource, LlmSpec, RunConfig};
pub use eval::{micro_f1_multi, micro_f1_single, ColumnRecord, EvalReport};
pub use kgstore::{EntityId, KgBackend, KgSnapshot, Triple};
pub use linking::{EntityLinker, LinkOutcome, LinkerKind};
pub use llm::{parse_prediction, LlmBackend, Prediction};
pub use pipeline::{run_annotate, run_link_report, PipelineError};
pub use processor::{build_entity_labels, build_entity_triplets, ColumnContext, ContextKind};
pub use retriever::{retrieve, select_cells, FallbackPolicy, RetrievalResult};
pub use tabular::{load_dataset, serialize_table_csv, Cell, ColumnQuery, LabelVocabulary, Table};
