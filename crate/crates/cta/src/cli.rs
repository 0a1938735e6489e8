//! Command-line surface: `annotate`, `link-report`, and `dump-prompts`.
//!
//! Every flag can also come from a TOML config file (`--config`); flags
//! win over file values.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{resolve, CliOverrides, ConfigFile, RunConfig};
use crate::pipeline::{dump_prompts, run_annotate, run_link_report, PipelineError};

#[derive(Debug, Parser)]
#[command(
    name = "cta",
    about = "Column type annotation with knowledge-graph-augmented prompts",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotate every labeled column and score the predictions.
    Annotate(RunArgs),
    /// Link every cell mention and report entity-linking accuracy.
    LinkReport(RunArgs),
    /// Compose every prompt without calling any LLM.
    DumpPrompts(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset file (JSON Lines, one table per line).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Label vocabulary file, one label per line.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// KG backend: snapshot TSV path or http(s) endpoint.
    #[arg(long)]
    pub kg: Option<String>,
    /// Linker: ground-truth | label-match | remote.
    #[arg(long)]
    pub linker: Option<String>,
    /// Context kind: none | entity-labels | entity-triplets.
    #[arg(long)]
    pub context: Option<String>,
    /// Annotation mode: multi | single.
    #[arg(long)]
    pub mode: Option<String>,
    /// LLM backend: live | replay:<path> | mock:<path>.
    #[arg(long)]
    pub llm: Option<String>,
    /// Context entries kept after ordering; 0 disables truncation.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Cap on serialized table rows.
    #[arg(long)]
    pub max_rows: Option<usize>,
    /// Fallback policy: all-failed | any-failed.
    #[arg(long)]
    pub fallback_policy: Option<String>,
    /// Output path (report JSON, or JSONL for link-report/dump-prompts).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for column-level parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Model tag sent to the live backend.
    #[arg(long)]
    pub model: Option<String>,
    /// Correct the published system-message typo instead of reproducing it.
    #[arg(long)]
    pub fix_system_typo: bool,
}

impl RunArgs {
    pub fn into_config(self) -> Result<RunConfig, PipelineError> {
        let file = match &self.config {
            Some(path) => Some(ConfigFile::load(path)?),
            None => None,
        };
        let overrides = CliOverrides {
            dataset: self.dataset,
            vocabulary: self.vocab,
            kg: self.kg,
            linker: self.linker,
            context: self.context,
            mode: self.mode,
            llm: self.llm,
            top_k: self.top_k,
            max_rows: self.max_rows,
            fallback_policy: self.fallback_policy,
            out: self.out,
            jobs: self.jobs,
            model: self.model,
            fix_system_typo: self.fix_system_typo,
        };
        Ok(resolve(file.as_ref(), &overrides)?)
    }
}

/// Dispatches a parsed command line. Returns the process exit message on
/// success; errors bubble up for `main` to report.
pub fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Annotate(args) => {
            let config = args.into_config()?;
            let outcome = run_annotate(&config)?;
            println!(
                "mode={} micro_f1={:.4} tp={} fp={} fn={} columns={}",
                outcome.report.mode.as_str(),
                outcome.report.micro_f1,
                outcome.report.tp,
                outcome.report.fp,
                outcome.report.false_neg,
                outcome.report.columns.len()
            );
            match outcome.report.el_accuracy {
                Some(acc) => println!("el_accuracy={acc:.4}"),
                None => println!("el_accuracy=undefined"),
            }
            println!("report={}", outcome.report_path.display());
            println!("prompts={}", outcome.prompt_dump_path.display());
            Ok(())
        }
        Command::LinkReport(args) => {
            let config = args.into_config()?;
            let summary = run_link_report(&config)?;
            match summary.accuracy {
                Some(acc) => println!("el_accuracy={acc:.4}"),
                None => println!("el_accuracy=undefined"),
            }
            println!(
                "records={} report={}",
                summary.records,
                summary.path.display()
            );
            Ok(())
        }
        Command::DumpPrompts(args) => {
            let config = args.into_config()?;
            let (path, count) = dump_prompts(&config)?;
            println!("prompts={count} dump={}", path.display());
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{KgSource, LlmSpec};
    use crate::linking::LinkerKind;
    use crate::processor::ContextKind;

    #[test]
    fn full_flag_set_parses() {
        let cli = Cli::try_parse_from([
            "cta",
            "annotate",
            "--dataset",
            "d.jsonl",
            "--vocab",
            "v.txt",
            "--kg",
            "kg.tsv",
            "--linker",
            "label-match",
            "--context",
            "entity-triplets",
            "--mode",
            "single",
            "--llm",
            "mock:lookup.json",
            "--top-k",
            "5",
            "--max-rows",
            "30",
            "--fallback-policy",
            "any-failed",
            "--out",
            "report.json",
            "--jobs",
            "4",
        ])
        .unwrap();
        let Command::Annotate(args) = cli.command else {
            panic!("expected annotate");
        };
        let config = args.into_config().unwrap();
        assert_eq!(config.linker, LinkerKind::LabelMatch);
        assert_eq!(config.context, ContextKind::EntityTriplets);
        assert_eq!(config.top_k, Some(5));
        assert_eq!(config.max_rows, Some(30));
        assert_eq!(config.jobs, 4);
        assert!(matches!(config.kg, Some(KgSource::Snapshot(_))));
        assert!(matches!(config.llm, Some(LlmSpec::Mock(_))));
    }

    #[test]
    fn unknown_subcommand_is_rejected() {
        assert!(Cli::try_parse_from(["cta", "frobnicate"]).is_err());
    }

    #[test]
    fn missing_required_paths_surface_as_config_errors() {
        let cli = Cli::try_parse_from(["cta", "dump-prompts"]).unwrap();
        let Command::DumpPrompts(args) = cli.command else {
            panic!("expected dump-prompts");
        };
        assert!(args.into_config().is_err());
    }
}
