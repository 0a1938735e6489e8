//! Run configuration: the experiment grid of one annotation run, loadable
//! from a TOML file with every knob overridable on the command line.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::augmentor::Mode;
use crate::kgstore::remote::RemoteKgConfig;
use crate::linking::LinkerKind;
use crate::llm::LiveLlmConfig;
use crate::processor::ContextKind;
use crate::retriever::FallbackPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("configuration: {0}")]
    Invalid(String),
}

/// Where KG lookups go: a local TSV snapshot or a remote endpoint.
#[derive(Debug, Clone)]
pub enum KgSource {
    Snapshot(PathBuf),
    Remote(RemoteKgConfig),
}

/// Which completion backend to run.
#[derive(Debug, Clone)]
pub enum LlmSpec {
    Live(LiveLlmConfig),
    Replay(PathBuf),
    Mock(PathBuf),
}

/// Fully resolved configuration for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub vocabulary: PathBuf,
    pub kg: Option<KgSource>,
    pub linker: LinkerKind,
    pub context: ContextKind,
    pub mode: Mode,
    pub llm: Option<LlmSpec>,
    /// Context entries kept after ordering; none disables truncation.
    pub top_k: Option<usize>,
    /// Serialized table row cap; none serializes whole tables.
    pub max_rows: Option<usize>,
    pub fallback_policy: FallbackPolicy,
    pub out: PathBuf,
    pub jobs: usize,
    pub model: String,
    pub temperature: f64,
    pub correct_system_typo: bool,
    /// Candidate count requested from search backends by the remote linker.
    pub search_limit: usize,
    /// Relation whose objects are treated as entity types.
    pub instance_of_relation: String,
}

pub const DEFAULT_TOP_K: usize = 10;
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_SEARCH_LIMIT: usize = 5;
/// Relation whose objects are the entity types in Entity-Triplets contexts.
pub const DEFAULT_INSTANCE_OF_RELATION: &str = "P31";

impl RunConfig {
    /// A config with every optional knob at its default, for tests and
    /// programmatic runs.
    pub fn new(dataset: PathBuf, vocabulary: PathBuf, out: PathBuf) -> Self {
        RunConfig {
            dataset,
            vocabulary,
            kg: None,
            linker: LinkerKind::GroundTruth,
            context: ContextKind::EntityTriplets,
            mode: Mode::Multi,
            llm: None,
            top_k: Some(DEFAULT_TOP_K),
            max_rows: None,
            fallback_policy: FallbackPolicy::AllFailed,
            out,
            jobs: 1,
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            correct_system_typo: false,
            search_limit: DEFAULT_SEARCH_LIMIT,
            instance_of_relation: DEFAULT_INSTANCE_OF_RELATION.to_string(),
        }
    }
}

/// TOML form of [`RunConfig`]: everything optional so the file and the
/// command line can each fill in parts.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dataset: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
    pub linker: Option<String>,
    pub context: Option<String>,
    pub mode: Option<String>,
    pub top_k: Option<usize>,
    pub max_rows: Option<usize>,
    pub fallback_policy: Option<String>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub correct_system_typo: Option<bool>,
    pub search_limit: Option<usize>,
    pub instance_of: Option<String>,
    pub kg: Option<KgSection>,
    pub llm: Option<LlmSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KgSection {
    pub snapshot: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub search_url: Option<String>,
    pub entity_url: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
    pub max_retries: Option<u32>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub backend: Option<String>,
    pub path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub max_in_flight: Option<usize>,
    pub max_retries: Option<u32>,
    pub timeout_secs: Option<u64>,
    pub min_request_interval_ms: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|err| ConfigError::Parse {
            path: path.display().to_string(),
            message: err.to_string(),
        })
    }
}

pub fn parse_linker(value: &str) -> Result<LinkerKind, ConfigError> {
    match value {
        "ground-truth" | "ground_truth" => Ok(LinkerKind::GroundTruth),
        "label-match" | "label_match" => Ok(LinkerKind::LabelMatch),
        "remote" => Ok(LinkerKind::Remote),
        other => Err(ConfigError::Invalid(format!(
            "unknown linker {other:?}; expected ground-truth, label-match, or remote"
        ))),
    }
}

pub fn parse_context(value: &str) -> Result<ContextKind, ConfigError> {
    match value {
        "none" => Ok(ContextKind::None),
        "entity-labels" | "entity_labels" => Ok(ContextKind::EntityLabels),
        "entity-triplets" | "entity_triplets" => Ok(ContextKind::EntityTriplets),
        other => Err(ConfigError::Invalid(format!(
            "unknown context {other:?}; expected none, entity-labels, or entity-triplets"
        ))),
    }
}

pub fn parse_mode(value: &str) -> Result<Mode, ConfigError> {
    match value {
        "multi" => Ok(Mode::Multi),
        "single" => Ok(Mode::Single),
        other => Err(ConfigError::Invalid(format!(
            "unknown mode {other:?}; expected multi or single"
        ))),
    }
}

pub fn parse_fallback_policy(value: &str) -> Result<FallbackPolicy, ConfigError> {
    match value {
        "all-failed" | "all_failed" => Ok(FallbackPolicy::AllFailed),
        "any-failed" | "any_failed" => Ok(FallbackPolicy::AnyFailed),
        other => Err(ConfigError::Invalid(format!(
            "unknown fallback policy {other:?}; expected all-failed or any-failed"
        ))),
    }
}

/// `--kg` accepts a snapshot path or an `http(s)://` endpoint.
pub fn parse_kg_source(value: &str) -> KgSource {
    if value.starts_with("http://") || value.starts_with("https://") {
        KgSource::Remote(RemoteKgConfig::mediawiki(value))
    } else {
        KgSource::Snapshot(PathBuf::from(value))
    }
}

/// `--llm` accepts `live`, `replay:<path>`, or `mock:<path>`.
pub fn parse_llm_spec(value: &str) -> Result<LlmSpec, ConfigError> {
    if value == "live" {
        return Ok(LlmSpec::Live(LiveLlmConfig::default()));
    }
    if let Some(path) = value.strip_prefix("replay:") {
        return Ok(LlmSpec::Replay(PathBuf::from(path)));
    }
    if let Some(path) = value.strip_prefix("mock:") {
        return Ok(LlmSpec::Mock(PathBuf::from(path)));
    }
    Err(ConfigError::Invalid(format!(
        "unknown llm backend {value:?}; expected live, replay:<path>, or mock:<path>"
    )))
}

fn kg_source_from_section(section: &KgSection) -> Result<Option<KgSource>, ConfigError> {
    if let Some(snapshot) = &section.snapshot {
        if section.endpoint.is_some() {
            return Err(ConfigError::Invalid(
                "kg section sets both snapshot and endpoint".to_string(),
            ));
        }
        return Ok(Some(KgSource::Snapshot(snapshot.clone())));
    }
    if let Some(endpoint) = &section.endpoint {
        let mut remote = RemoteKgConfig::mediawiki(endpoint);
        if let Some(url) = &section.search_url {
            remote.search_url = url.clone();
        }
        if let Some(url) = &section.entity_url {
            remote.entity_url = url.clone();
        }
        remote.cache_dir = section.cache_dir.clone();
        if let Some(n) = section.max_in_flight {
            remote.max_in_flight = n;
        }
        if let Some(n) = section.max_retries {
            remote.max_retries = n;
        }
        if let Some(secs) = section.timeout_secs {
            remote.timeout = Duration::from_secs(secs);
        }
        return Ok(Some(KgSource::Remote(remote)));
    }
    Ok(None)
}

fn llm_spec_from_section(section: &LlmSection) -> Result<Option<LlmSpec>, ConfigError> {
    let Some(backend) = &section.backend else {
        return Ok(None);
    };
    match backend.as_str() {
        "live" => {
            let mut live = LiveLlmConfig::default();
            if let Some(endpoint) = &section.endpoint {
                live.endpoint = endpoint.clone();
            }
            if let Some(env) = &section.api_key_env {
                live.api_key_env = env.clone();
            }
            if let Some(n) = section.max_in_flight {
                live.max_in_flight = n;
            }
            if let Some(n) = section.max_retries {
                live.max_retries = n;
            }
            if let Some(secs) = section.timeout_secs {
                live.timeout = Duration::from_secs(secs);
            }
            if let Some(ms) = section.min_request_interval_ms {
                live.min_request_interval = Duration::from_millis(ms);
            }
            Ok(Some(LlmSpec::Live(live)))
        }
        "replay" => {
            let path = section.path.clone().ok_or_else(|| {
                ConfigError::Invalid("llm backend replay needs a path".to_string())
            })?;
            Ok(Some(LlmSpec::Replay(path)))
        }
        "mock" => {
            let path = section
                .path
                .clone()
                .ok_or_else(|| ConfigError::Invalid("llm backend mock needs a path".to_string()))?;
            Ok(Some(LlmSpec::Mock(path)))
        }
        other => Err(ConfigError::Invalid(format!(
            "unknown llm backend {other:?} in config file"
        ))),
    }
}

/// Command-line overrides, already parsed to strings by clap. Highest
/// precedence; the config file fills gaps; defaults close the rest.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub dataset: Option<PathBuf>,
    pub vocabulary: Option<PathBuf>,
    pub kg: Option<String>,
    pub linker: Option<String>,
    pub context: Option<String>,
    pub mode: Option<String>,
    pub llm: Option<String>,
    pub top_k: Option<usize>,
    pub max_rows: Option<usize>,
    pub fallback_policy: Option<String>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub model: Option<String>,
    pub fix_system_typo: bool,
}

/// Merges defaults, the optional config file, and CLI overrides into a
/// [`RunConfig`].
pub fn resolve(file: Option<&ConfigFile>, cli: &CliOverrides) -> Result<RunConfig, ConfigError> {
    let missing = |what: &str, flag: &str| {
        ConfigError::Invalid(format!(
            "{what} is required (set {flag} or the config file key)"
        ))
    };

    let dataset = cli
        .dataset
        .clone()
        .or_else(|| file.and_then(|f| f.dataset.clone()))
        .ok_or_else(|| missing("dataset path", "--dataset"))?;
    let vocabulary = cli
        .vocabulary
        .clone()
        .or_else(|| file.and_then(|f| f.vocabulary.clone()))
        .ok_or_else(|| missing("vocabulary path", "--vocab"))?;
    let out = cli
        .out
        .clone()
        .or_else(|| file.and_then(|f| f.out.clone()))
        .ok_or_else(|| missing("output path", "--out"))?;

    let mut config = RunConfig::new(dataset, vocabulary, out);

    if let Some(section) = file.and_then(|f| f.kg.as_ref()) {
        config.kg = kg_source_from_section(section)?;
    }
    if let Some(value) = &cli.kg {
        config.kg = Some(parse_kg_source(value));
    }

    if let Some(section) = file.and_then(|f| f.llm.as_ref()) {
        config.llm = llm_spec_from_section(section)?;
    }
    if let Some(value) = &cli.llm {
        config.llm = Some(parse_llm_spec(value)?);
    }

    if let Some(value) = file.and_then(|f| f.linker.as_deref()) {
        config.linker = parse_linker(value)?;
    }
    if let Some(value) = cli.linker.as_deref() {
        config.linker = parse_linker(value)?;
    }

    if let Some(value) = file.and_then(|f| f.context.as_deref()) {
        config.context = parse_context(value)?;
    }
    if let Some(value) = cli.context.as_deref() {
        config.context = parse_context(value)?;
    }

    if let Some(value) = file.and_then(|f| f.mode.as_deref()) {
        config.mode = parse_mode(value)?;
    }
    if let Some(value) = cli.mode.as_deref() {
        config.mode = parse_mode(value)?;
    }

    if let Some(value) = file.and_then(|f| f.fallback_policy.as_deref()) {
        config.fallback_policy = parse_fallback_policy(value)?;
    }
    if let Some(value) = cli.fallback_policy.as_deref() {
        config.fallback_policy = parse_fallback_policy(value)?;
    }

    // 0 means "no truncation" on the command line and in the file.
    if let Some(k) = file.and_then(|f| f.top_k) {
        config.top_k = if k == 0 { None } else { Some(k) };
    }
    if let Some(k) = cli.top_k {
        config.top_k = if k == 0 { None } else { Some(k) };
    }

    if let Some(m) = file.and_then(|f| f.max_rows) {
        config.max_rows = Some(m);
    }
    if let Some(m) = cli.max_rows {
        config.max_rows = Some(m);
    }

    if let Some(j) = file.and_then(|f| f.jobs) {
        config.jobs = j.max(1);
    }
    if let Some(j) = cli.jobs {
        config.jobs = j.max(1);
    }

    if let Some(model) = file.and_then(|f| f.model.clone()) {
        config.model = model;
    }
    if let Some(model) = cli.model.clone() {
        config.model = model;
    }

    if let Some(t) = file.and_then(|f| f.temperature) {
        config.temperature = t;
    }
    if let Some(v) = file.and_then(|f| f.correct_system_typo) {
        config.correct_system_typo = v;
    }
    if cli.fix_system_typo {
        config.correct_system_typo = true;
    }
    if let Some(limit) = file.and_then(|f| f.search_limit) {
        config.search_limit = limit.max(1);
    }
    if let Some(relation) = file.and_then(|f| f.instance_of.clone()) {
        config.instance_of_relation = relation;
    }

    if config.temperature < 0.0 {
        return Err(ConfigError::Invalid("temperature must be >= 0".to_string()));
    }

    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_overrides_beat_the_file() {
        let file: ConfigFile = toml::from_str(
            r#"
            dataset = "file-data.jsonl"
            vocabulary = "vocab.txt"
            out = "report.json"
            mode = "single"
            top_k = 3

            [kg]
            snapshot = "kg.tsv"

            [llm]
            backend = "mock"
            path = "lookup.json"
            "#,
        )
        .unwrap();
        let cli = CliOverrides {
            dataset: Some(PathBuf::from("cli-data.jsonl")),
            mode: Some("multi".to_string()),
            ..Default::default()
        };
        let config = resolve(Some(&file), &cli).unwrap();
        assert_eq!(config.dataset, PathBuf::from("cli-data.jsonl"));
        assert_eq!(config.mode, Mode::Multi);
        assert_eq!(config.top_k, Some(3));
        assert!(matches!(config.kg, Some(KgSource::Snapshot(_))));
        assert!(matches!(config.llm, Some(LlmSpec::Mock(_))));
    }

    #[test]
    fn missing_required_field_is_an_error() {
        let err = resolve(None, &CliOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("dataset"));
    }

    #[test]
    fn top_k_zero_disables_truncation() {
        let cli = CliOverrides {
            dataset: Some(PathBuf::from("d")),
            vocabulary: Some(PathBuf::from("v")),
            out: Some(PathBuf::from("o")),
            top_k: Some(0),
            ..Default::default()
        };
        let config = resolve(None, &cli).unwrap();
        assert_eq!(config.top_k, None);
    }

    #[test]
    fn kg_flag_distinguishes_urls_from_paths() {
        assert!(matches!(
            parse_kg_source("https://www.wikidata.org/w/api.php"),
            KgSource::Remote(_)
        ));
        assert!(matches!(
            parse_kg_source("fixtures/kg.tsv"),
            KgSource::Snapshot(_)
        ));
    }

    #[test]
    fn llm_flag_syntax() {
        assert!(matches!(parse_llm_spec("live"), Ok(LlmSpec::Live(_))));
        assert!(matches!(
            parse_llm_spec("replay:x.jsonl"),
            Ok(LlmSpec::Replay(_))
        ));
        assert!(matches!(
            parse_llm_spec("mock:x.json"),
            Ok(LlmSpec::Mock(_))
        ));
        assert!(parse_llm_spec("other").is_err());
    }

    #[test]
    fn unknown_enum_values_are_rejected() {
        assert!(parse_linker("neural").is_err());
        assert!(parse_context("triples").is_err());
        assert!(parse_mode("both").is_err());
        assert!(parse_fallback_policy("never").is_err());
    }
}
