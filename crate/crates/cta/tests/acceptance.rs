//! Acceptance suite. One test per criterion; each prints a PASS line with
//! its runtime (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Golden files live in `tests/golden/`; regenerate them by running the
//! suite with `UPDATE_GOLDENS=1` and reviewing the diff.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cta::augmentor::{build_prompt, Mode, PromptOptions};
use cta::config::RunConfig;
use cta::eval::{micro_f1_multi, micro_f1_single, ColumnRecord, EvalError};
use cta::fixtures::{generate_fixture, oracle_recompute};
use cta::kgstore::{natural_cmp, EntityId, KgSnapshot, Triple};
use cta::linking::{linking_accuracy, EntityLinker, GroundTruthLinker};
use cta::llm::{prompt_hash, write_replay, ReplayEntry};
use cta::pipeline::{dump_prompts, run_annotate, run_link_report};
use cta::processor::{build_entity_labels, build_entity_triplets, ContextKind};
use cta::retriever::{retrieve, CellKnowledge, FallbackPolicy, RetrievalResult};
use cta::tabular::{load_dataset, ColumnQuery, DatasetFormat, LabelVocabulary};
use cta::{KgSource, LlmSpec};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

/// Byte-for-byte golden comparison; `UPDATE_GOLDENS=1` rewrites instead.
fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("missing golden file {name}; run with UPDATE_GOLDENS=1"));
    assert_eq!(actual, expected, "golden file {name} differs");
}

fn pass(criterion: &str, started: Instant, limit: Duration) {
    let elapsed = started.elapsed();
    assert!(
        elapsed < limit,
        "criterion {criterion} took {elapsed:?}, limit {limit:?}"
    );
    println!("[PASS] criterion {criterion} ({elapsed:.2?})");
}

// ── Criterion 1: prompt fidelity ─────────────────────────────────────────

#[test]
fn criterion_1_prompt_fidelity() {
    let started = Instant::now();

    let tables = load_dataset(fixture("human_column.jsonl"), DatasetFormat::Jsonl).unwrap();
    let vocab = LabelVocabulary::load(fixture("vocab_255.txt")).unwrap();
    assert_eq!(vocab.len(), 255);
    let kg = KgSnapshot::load(fixture("human_kg.tsv")).unwrap();

    let query = ColumnQuery::new(&tables[0], 0).unwrap();
    let result = retrieve(&query, &GroundTruthLinker, &kg, FallbackPolicy::AllFailed).unwrap();
    let ctx = build_entity_triplets(&result, "P31", Some(10)).unwrap();
    assert_eq!(ctx.counted_labels(), vec![("human", 6)]);

    let opts = PromptOptions::default();
    let single = build_prompt(&query, &vocab, Some(&ctx), Mode::Single, &opts).unwrap();
    let multi = build_prompt(&query, &vocab, Some(&ctx), Mode::Multi, &opts).unwrap();
    let single_vanilla = build_prompt(&query, &vocab, None, Mode::Single, &opts).unwrap();
    let multi_vanilla = build_prompt(&query, &vocab, None, Mode::Multi, &opts).unwrap();

    // The published template text, asserted verbatim (trailing spaces and
    // the system-message typo included).
    assert_eq!(
        single.system,
        "Be a helpful, accurate assistant for data discovery and exploration desiged to output valid JSON in the format {'type': []}"
    );
    assert!(single
        .user
        .starts_with("Consider this table given in Comma-separated Values format:\n```\n"));
    assert!(single
        .user
        .contains("There are a list of 255 valid types for each column: "));
    assert!(single.user.contains(
        ". Your task is to choose only one type from the list to annotate the first column. Solve this task by following these steps: \n"
    ));
    assert!(single
        .user
        .contains("\n1. Look at the cells in the first column of the above table. \n"));
    assert!(single.user.contains(
        "\n2. Consider this information carefully: Cells in this column are instances of the following wikidata entities: human (6 cells).\n"
    ));
    assert!(single.user.ends_with(
        "\n3. Choose only one valid type from the given list of types. Check that the type MUST be in the list. Give the answer in valid JSON format."
    ));
    assert!(multi.user.contains(
        ". Your task is to choose one or multiple types from the list to annotate the first column. Solve this task by following these steps: \n"
    ));
    assert!(multi.user.contains(
        "\n3. Mark each type in the given list with 0 or 1. Mark a type with 1 if it can better represent all cells of the first column. Mark a type with 0 otherwise. \n"
    ));
    assert!(multi.user.ends_with(
        "\n4. Give a list of types that you have marked 1 in the previous step. Check that the types MUST be in the list. Give the answer in valid JSON format."
    ));
    // Vanilla prompts drop step 2 and renumber.
    assert!(!single_vanilla
        .user
        .contains("Consider this information carefully"));
    assert!(single_vanilla
        .user
        .contains("\n2. Choose only one valid type"));
    assert!(multi_vanilla
        .user
        .contains("\n2. Mark each type in the given list with 0 or 1."));
    assert!(multi_vanilla.user.contains("\n3. Give a list of types"));

    check_golden("system_message.txt", &single.system);
    check_golden("prompt_single_ett.txt", &single.user);
    check_golden("prompt_multi_ett.txt", &multi.user);
    check_golden("prompt_single_vanilla.txt", &single_vanilla.user);
    check_golden("prompt_multi_vanilla.txt", &multi_vanilla.user);

    pass("1: prompt fidelity", started, Duration::from_secs(1));
}

// ── Criterion 2: processor oracle equivalence ────────────────────────────

/// Local SplitMix64 so the randomized cases are deterministic without
/// touching library code.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
}

fn random_retrieval_result(rng: &mut Rng) -> RetrievalResult {
    let entity_labels = ["Aster", "Briar", "Cove", "Aster", "Dune", "Elm"]; // duplicate on purpose
    let type_labels = ["alpha", "beta", "gamma", "delta", "epsilon"];
    let relations = ["P31", "P361", "P106"];

    let n_cells = 1 + rng.below(20);
    let mut labels: BTreeMap<EntityId, String> = BTreeMap::new();
    let mut knowledge = Vec::with_capacity(n_cells);
    for row in 0..n_cells {
        let entity_idx = rng.below(entity_labels.len());
        let entity = EntityId::new(format!("Q{}", 100 + entity_idx)).unwrap();
        labels.insert(entity.clone(), entity_labels[entity_idx].to_string());

        let mut neighborhood = Vec::new();
        let n_edges = rng.below(5);
        for _ in 0..n_edges {
            let type_idx = rng.below(6); // index 5 stays unlabeled
            let object = EntityId::new(format!("T{type_idx}")).unwrap();
            if type_idx < type_labels.len() {
                labels.insert(object.clone(), type_labels[type_idx].to_string());
            }
            neighborhood.push(Triple {
                subject: entity.clone(),
                relation: relations[rng.below(relations.len())].to_string(),
                object,
            });
        }
        knowledge.push(CellKnowledge {
            row,
            col: 0,
            entity: entity.clone(),
            label: entity_labels[entity_idx].to_string(),
            neighborhood,
        });
    }
    RetrievalResult {
        table_id: "rand".to_string(),
        target_col: 0,
        selected_cells: n_cells,
        knowledge,
        labels,
        fallback: false,
        outcomes: Vec::new(),
    }
}

fn naive_label_counts(result: &RetrievalResult) -> BTreeMap<EntityId, usize> {
    let mut counts = BTreeMap::new();
    for ck in &result.knowledge {
        *counts.entry(ck.entity.clone()).or_insert(0) += 1;
    }
    counts
}

fn naive_triplet_counts(result: &RetrievalResult, relation: &str) -> BTreeMap<EntityId, usize> {
    let mut counts: BTreeMap<EntityId, usize> = BTreeMap::new();
    for ck in &result.knowledge {
        let mut seen: BTreeSet<&EntityId> = BTreeSet::new();
        for triple in &ck.neighborhood {
            if triple.relation == relation && seen.insert(&triple.object) {
                *counts.entry(triple.object.clone()).or_insert(0) += 1;
            }
        }
    }
    counts
}

#[test]
fn criterion_2_processor_matches_naive_oracle() {
    let started = Instant::now();
    let mut rng = Rng(0x5EED_0002);

    for case in 0..200 {
        let result = random_retrieval_result(&mut rng);

        let label_ctx = build_entity_labels(&result, None).unwrap();
        let label_counts: BTreeMap<EntityId, usize> = label_ctx
            .entries
            .iter()
            .map(|e| (e.entity.clone(), e.cells))
            .collect();
        assert_eq!(
            label_counts,
            naive_label_counts(&result),
            "case {case} labels"
        );

        let triplet_ctx = build_entity_triplets(&result, "P31", None).unwrap();
        let triplet_counts: BTreeMap<EntityId, usize> = triplet_ctx
            .entries
            .iter()
            .map(|e| (e.entity.clone(), e.cells))
            .collect();
        assert_eq!(
            triplet_counts,
            naive_triplet_counts(&result, "P31"),
            "case {case} triplets"
        );

        // Ordering invariant: count desc, label asc, id natural asc.
        for ctx in [&label_ctx, &triplet_ctx] {
            for pair in ctx.entries.windows(2) {
                let ordered = pair[1].cells < pair[0].cells
                    || (pair[1].cells == pair[0].cells
                        && (pair[0].label < pair[1].label
                            || (pair[0].label == pair[1].label
                                && natural_cmp(pair[0].entity.as_str(), pair[1].entity.as_str())
                                    .is_lt())));
                assert!(ordered, "case {case}: entries out of order");
            }
        }
    }

    pass(
        "2: processor oracle equivalence (200 cases)",
        started,
        Duration::from_secs(5),
    );
}

// ── Criterion 3: metric correctness ──────────────────────────────────────

fn record(table_id: &str, gold: &[&str], predicted: &[&str]) -> ColumnRecord {
    ColumnRecord {
        table_id: table_id.to_string(),
        col: 0,
        gold: gold.iter().map(|s| s.to_string()).collect(),
        predicted: predicted.iter().map(|s| s.to_string()).collect(),
        context_kind: ContextKind::EntityTriplets,
        fallback_used: false,
        parse_ok: true,
    }
}

#[test]
fn criterion_3_metric_correctness() {
    let started = Instant::now();

    // Two-column hand case: TP=2, FP=1, FN=1, micro-F1 = 4/6.
    let report = micro_f1_multi(vec![
        record("t1", &["a", "b"], &["a"]),
        record("t2", &["c"], &["c", "d"]),
    ])
    .unwrap();
    assert_eq!((report.tp, report.fp, report.false_neg), (2, 1, 1));
    assert!((report.micro_f1 - 2.0 * 2.0 / 6.0).abs() < 1e-9);
    assert_eq!(format!("{:.4}", report.micro_f1), "0.6667");

    // Single-label remap truth table.
    let in_set = micro_f1_single(vec![record("t1", &["a", "b"], &["a"])]).unwrap();
    assert_eq!((in_set.tp, in_set.fp, in_set.false_neg), (1, 0, 0));

    let out_of_set = micro_f1_single(vec![record("t1", &["a"], &["d"])]).unwrap();
    assert_eq!(
        (out_of_set.tp, out_of_set.fp, out_of_set.false_neg),
        (0, 1, 1)
    );

    let empty = micro_f1_single(vec![record("t1", &["a"], &[])]).unwrap();
    assert_eq!((empty.tp, empty.fp, empty.false_neg), (0, 0, 1));

    let multi_prediction = micro_f1_single(vec![record("t1", &["a"], &["a", "b"])]);
    assert!(matches!(
        multi_prediction,
        Err(EvalError::MultiPrediction { .. })
    ));

    // Four columns, three correct: micro-F1 = 6/8.
    let four = micro_f1_single(vec![
        record("t1", &["a"], &["a"]),
        record("t2", &["b"], &["b"]),
        record("t3", &["c"], &["c"]),
        record("t4", &["d"], &["x"]),
    ])
    .unwrap();
    assert!((four.micro_f1 - 0.75).abs() < 1e-9);

    pass("3: metric correctness", started, Duration::from_secs(1));
}

// ── Criterion 4: linker / EL accuracy ────────────────────────────────────

#[test]
fn criterion_4_linking_accuracy() {
    let started = Instant::now();

    // Ground truth over the gold-linked fixture: exactly 1.0.
    let tables = load_dataset(fixture("human_column.jsonl"), DatasetFormat::Jsonl).unwrap();
    let query = ColumnQuery::new(&tables[0], 0).unwrap();
    let cells = cta::retriever::select_cells(&query);
    let outcomes = GroundTruthLinker.link_cells(&cells).unwrap();
    assert_eq!(linking_accuracy(&outcomes, &cells).unwrap(), Some(1.0));

    // Label match over the 3-cell partial fixture: exactly 2/3, measured
    // through the link-report pipeline surface.
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig::new(
        fixture("el3_dataset.jsonl"),
        fixture("vocab_255.txt"),
        dir.path().join("links.jsonl"),
    );
    config.kg = Some(KgSource::Snapshot(fixture("el3_kg.tsv")));
    config.linker = cta::LinkerKind::LabelMatch;
    let summary = run_link_report(&config).unwrap();
    assert_eq!(summary.accuracy, Some(2.0 / 3.0));
    assert_eq!(summary.records, 3);
    let report_text = fs::read_to_string(&summary.path).unwrap();
    assert_eq!(report_text.lines().count(), 3);
    assert!(report_text.contains("\"mention\":\"15 Sge\""));

    pass("4: linker EL accuracy", started, Duration::from_secs(1));
}

// ── Criterion 5: fallback policies ───────────────────────────────────────

fn dump_lines(config: &RunConfig) -> Vec<serde_json::Value> {
    let (path, _) = dump_prompts(config).unwrap();
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| serde_json::from_str(line).unwrap())
        .collect()
}

#[test]
fn criterion_5_fallback_policies() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    let mut config = RunConfig::new(
        fixture("fallback_dataset.jsonl"),
        fixture("vocab_255.txt"),
        dir.path().join("prompts_all_failed.jsonl"),
    );
    config.kg = Some(KgSource::Snapshot(fixture("fallback_kg.tsv")));
    config.linker = cta::LinkerKind::LabelMatch;
    config.fallback_policy = FallbackPolicy::AllFailed;

    let lines = dump_lines(&config);
    assert_eq!(lines.len(), 2);
    let by_col: BTreeMap<u64, &serde_json::Value> = lines
        .iter()
        .map(|l| (l["col"].as_u64().unwrap(), l))
        .collect();
    // Column 0 has zero linkable cells: vanilla prompt.
    assert_eq!(by_col[&0]["kind"], "none");
    assert!(!by_col[&0]["user"]
        .as_str()
        .unwrap()
        .contains("Consider this information carefully"));
    // Column 1 linked 2 of 3 cells: still augmented under all-failed.
    assert_eq!(by_col[&1]["kind"], "entity_triplets");
    assert!(by_col[&1]["user"]
        .as_str()
        .unwrap()
        .contains("Consider this information carefully: Cells in this column are instances of the following wikidata entities: star (2 cells)."));

    config.fallback_policy = FallbackPolicy::AnyFailed;
    config.out = dir.path().join("prompts_any_failed.jsonl");
    let lines = dump_lines(&config);
    for line in &lines {
        // One unlinked cell is enough to fall back under any-failed.
        assert_eq!(line["kind"], "none");
        assert!(!line["user"]
            .as_str()
            .unwrap()
            .contains("Consider this information carefully"));
    }

    pass("5: fallback policies", started, Duration::from_secs(1));
}

// ── Criterion 6: end-to-end determinism against the oracle ───────────────

#[test]
fn criterion_6_end_to_end_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    let bundle = generate_fixture(&dir.path().join("bundle"), 7, 10).unwrap();
    let config = bundle.run_config(dir.path().join("report.json"));
    let outcome = run_annotate(&config).unwrap();

    let run_bytes = fs::read(&outcome.report_path).unwrap();
    let expected_bytes = fs::read(&bundle.expected_report).unwrap();
    assert_eq!(
        run_bytes, expected_bytes,
        "run report differs from the bundle's expected report"
    );

    // Byte-for-byte against the committed golden copy.
    check_golden(
        "expected_report_seed7_n10.json",
        std::str::from_utf8(&run_bytes).unwrap(),
    );

    // Field-for-field against an independent oracle recomputation.
    let oracle = oracle_recompute(&bundle).unwrap();
    assert_eq!(outcome.report, oracle);
    assert!(outcome.report.micro_f1 > 0.0 && outcome.report.micro_f1 < 1.0);
    assert_eq!(outcome.report.el_accuracy, Some(1.0));

    // Re-running is bit-identical.
    let config2 = bundle.run_config(dir.path().join("report2.json"));
    let outcome2 = run_annotate(&config2).unwrap();
    assert_eq!(fs::read(&outcome2.report_path).unwrap(), run_bytes);

    pass(
        "6: end-to-end determinism",
        started,
        Duration::from_secs(10),
    );
}

// ── Criterion 7: directional sanity over a replay cache ──────────────────

#[test]
fn criterion_7_directional_sanity() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    let bundle = generate_fixture(&dir.path().join("bundle"), 7, 10).unwrap();
    let tables = load_dataset(&bundle.dataset, DatasetFormat::Jsonl).unwrap();
    let vocab = LabelVocabulary::load(&bundle.vocabulary).unwrap();
    let kg = KgSnapshot::load(&bundle.snapshot).unwrap();
    let lookup: BTreeMap<String, String> =
        serde_json::from_str(&fs::read_to_string(&bundle.llm_lookup).unwrap()).unwrap();

    // Author the replay cache: KG-augmented prompts answer correctly
    // whenever the context's top type maps to a gold label; vanilla
    // prompts answer correctly half as often.
    let opts = PromptOptions::default();
    let wrong_answer = "{\"type\": [\"language.human_language\"]}".to_string();
    let mut entries: Vec<ReplayEntry> = Vec::new();
    let mut vanilla_prompts: Vec<(String, String)> = Vec::new(); // (hash, correct answer)
    let mut augmented_correct = Vec::new(); // per column, in work order
    for table in &tables {
        for (&col, gold) in table.gold_labels() {
            let query = ColumnQuery::new(table, col).unwrap();
            let result =
                retrieve(&query, &GroundTruthLinker, &kg, FallbackPolicy::AllFailed).unwrap();
            let correct_answer = format!(
                "{{\"type\": {}}}",
                serde_json::to_string(&gold.iter().collect::<Vec<_>>()).unwrap()
            );

            let vanilla = build_prompt(&query, &vocab, None, Mode::Multi, &opts).unwrap();
            vanilla_prompts.push((
                prompt_hash(&vanilla.system, &vanilla.user),
                correct_answer.clone(),
            ));

            if result.fallback {
                augmented_correct.push(false);
                continue;
            }
            let ett = build_entity_triplets(&result, "P31", Some(10)).unwrap();
            let etl = build_entity_labels(&result, Some(10)).unwrap();
            let top_maps_to_gold = ett
                .entries
                .first()
                .and_then(|entry| lookup.get(&entry.label))
                .is_some_and(|mapped| gold.contains(mapped));
            augmented_correct.push(top_maps_to_gold);
            let answer = if top_maps_to_gold {
                &correct_answer
            } else {
                &wrong_answer
            };
            for ctx in [&ett, &etl] {
                let prompt = build_prompt(&query, &vocab, Some(ctx), Mode::Multi, &opts).unwrap();
                entries.push(ReplayEntry {
                    prompt_hash: prompt_hash(&prompt.system, &prompt.user),
                    response: answer.clone(),
                });
            }
        }
    }

    let n_augmented_correct = augmented_correct.iter().filter(|c| **c).count();
    assert!(
        n_augmented_correct >= 2,
        "bundle must have at least two correctly-mapped columns"
    );
    let mut vanilla_budget = n_augmented_correct / 2;
    for (idx, (hash, correct_answer)) in vanilla_prompts.into_iter().enumerate() {
        let response = if augmented_correct[idx] && vanilla_budget > 0 {
            vanilla_budget -= 1;
            correct_answer
        } else {
            wrong_answer.clone()
        };
        entries.push(ReplayEntry {
            prompt_hash: hash,
            response,
        });
    }
    let replay_path = dir.path().join("replay.jsonl");
    write_replay(&replay_path, &entries).unwrap();

    let run = |context: ContextKind, out: &str| {
        let mut config = bundle.run_config(dir.path().join(out));
        config.llm = Some(LlmSpec::Replay(replay_path.clone()));
        config.context = context;
        run_annotate(&config).unwrap().report
    };
    let baseline = run(ContextKind::None, "baseline.json");
    let etl = run(ContextKind::EntityLabels, "etl.json");
    let ett = run(ContextKind::EntityTriplets, "ett.json");

    assert!(
        ett.micro_f1 > baseline.micro_f1,
        "expected ETT ({}) to strictly exceed baseline ({})",
        ett.micro_f1,
        baseline.micro_f1
    );
    assert!(
        etl.micro_f1 > baseline.micro_f1 && etl.micro_f1 <= ett.micro_f1,
        "expected baseline < ETL <= ETT, got {} / {} / {}",
        baseline.micro_f1,
        etl.micro_f1,
        ett.micro_f1
    );

    pass(
        "7: directional sanity (baseline < ETL <= ETT)",
        started,
        Duration::from_secs(10),
    );
}

// ── Criterion 8: optional live smoke test (network-gated) ────────────────

/// Not required for acceptance. Runs only when, in addition to
/// `--ignored`, the environment provides `CTA_SMOKE_CHAT_URL` (a
/// chat-completions endpoint; its API key in `OPENAI_API_KEY`) and
/// `CTA_SMOKE_KG_URL` (a MediaWiki-style endpoint).
#[test]
#[ignore = "network-gated live smoke test"]
fn criterion_8_live_smoke() {
    let Ok(chat_url) = std::env::var("CTA_SMOKE_CHAT_URL") else {
        println!("[SKIP] criterion 8: CTA_SMOKE_CHAT_URL not set");
        return;
    };
    let Ok(kg_url) = std::env::var("CTA_SMOKE_KG_URL") else {
        println!("[SKIP] criterion 8: CTA_SMOKE_KG_URL not set");
        return;
    };

    use cta::kgstore::remote::{RemoteKg, RemoteKgConfig};
    use cta::linking::RemoteLinker;
    use cta::llm::{CompletionRequest, LiveBackend, LiveLlmConfig, LlmBackend};
    use cta::tabular::{Cell, Table};
    use std::sync::Arc;

    let cells = ["Paris", "Berlin", "Rome"]
        .iter()
        .enumerate()
        .map(|(row, text)| Cell {
            row,
            col: 0,
            text: text.to_string(),
            gold_entity: None,
        })
        .collect();
    let table = Table::new("smoke", 3, 1, cells, BTreeMap::new()).unwrap();
    let query = ColumnQuery::new(&table, 0).unwrap();
    let vocab = LabelVocabulary::load(fixture("vocab_255.txt")).unwrap();

    let kg = Arc::new(RemoteKg::new(RemoteKgConfig::mediawiki(&kg_url)));
    let linker = RemoteLinker::new(kg.clone(), 5);
    let result = retrieve(&query, &linker, kg.as_ref(), FallbackPolicy::AllFailed).unwrap();
    assert!(!result.fallback, "public search should link capital cities");

    let ctx = build_entity_triplets(&result, "P31", Some(10)).unwrap();
    let prompt = build_prompt(
        &query,
        &vocab,
        Some(&ctx),
        Mode::Single,
        &PromptOptions::default(),
    )
    .unwrap();

    let backend = LiveBackend::new(LiveLlmConfig {
        endpoint: chat_url,
        ..Default::default()
    })
    .unwrap();
    let raw = backend
        .complete(&CompletionRequest::new(prompt, "gpt-3.5-turbo"))
        .unwrap();
    let prediction = cta::parse_prediction(&raw, Mode::Single);
    assert!(prediction.parse_ok, "live answer did not parse: {raw}");
    println!("[PASS] criterion 8: live smoke ({:?})", prediction.labels);
}
