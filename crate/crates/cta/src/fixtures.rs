//! Deterministic desk-scale test corpus and the independent oracle.
//!
//! [`generate_fixture`] writes a self-consistent bundle into a directory:
//! a miniature KG snapshot, a gold-linked table set, a label vocabulary, a
//! mock-LLM lookup table, the expected run report, and a manifest. The
//! bundle is a pure function of `(seed, n_tables)` — identical inputs give
//! byte-identical files.
//!
//! [`oracle_recompute`] re-derives the expected report with deliberately
//! naive per-cell loops over the raw bundle files. It shares no parsing or
//! computation code with the pipeline modules, so any disagreement indicts
//! exactly one side.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::augmentor::Mode;
use crate::config::{KgSource, LlmSpec, RunConfig};
use crate::eval::{emit_report, ColumnRecord, EvalError, EvalReport};
use crate::processor::ContextKind;
use crate::tabular::{write_dataset, Cell, Table, TabularError};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture io at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture bundle: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Tabular(#[from] TabularError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Paths of one generated bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureBundle {
    pub seed: u64,
    pub n_tables: usize,
    pub snapshot: PathBuf,
    pub dataset: PathBuf,
    pub vocabulary: PathBuf,
    pub llm_lookup: PathBuf,
    pub expected_report: PathBuf,
    pub manifest: PathBuf,
}

impl FixtureBundle {
    /// The canonical run configuration the expected report corresponds to:
    /// ground-truth linking, Entity-Triplets context, multi-label mode,
    /// mock LLM over the bundle lookup, top-10 truncation.
    pub fn run_config(&self, out: PathBuf) -> RunConfig {
        let mut config = RunConfig::new(self.dataset.clone(), self.vocabulary.clone(), out);
        config.kg = Some(KgSource::Snapshot(self.snapshot.clone()));
        config.llm = Some(LlmSpec::Mock(self.llm_lookup.clone()));
        config
    }
}

// ── Deterministic PRNG ───────────────────────────────────────────────────

/// SplitMix64. Hand-rolled so fixture bytes never depend on an external
/// crate's stream.
struct SplitMix64(u64);

impl SplitMix64 {
    fn new(seed: u64) -> Self {
        SplitMix64(seed)
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    fn chance(&mut self, numerator: u64, denominator: u64) -> bool {
        self.next_u64() % denominator < numerator
    }
}

// ── Corpus vocabulary ────────────────────────────────────────────────────

/// (type entity id, KG label, vocabulary type).
const TYPE_POOL: &[(&str, &str, &str)] = &[
    ("Q5", "human", "people.person"),
    (
        "Q476028",
        "association football club",
        "soccer.football_club",
    ),
    ("Q6256", "country", "location.country"),
    ("Q515", "city", "location.citytown"),
    ("Q11424", "film", "film.film"),
    ("Q571", "book", "book.written_work"),
    ("Q215380", "musical group", "music.musical_group"),
    ("Q3918", "university", "education.university"),
    ("Q523", "star", "astronomy.star"),
    ("Q8502", "mountain", "geography.mountain"),
    ("Q4022", "river", "geography.river"),
    ("Q482994", "album", "music.album"),
    ("Q5398426", "television series", "tv.tv_program"),
    ("Q7889", "video game", "cvg.computer_videogame"),
];

/// Vocabulary types that never appear in any gold set; wrong mock mappings
/// point here so a mismapped column is guaranteed incorrect.
const DISTRACTOR_TYPES: &[&str] = &[
    "time.event",
    "sports.sports_team",
    "location.location",
    "organization.organization",
    "people.family_name",
    "award.award",
    "military.military_unit",
    "language.human_language",
];

/// KG type labels whose mock mapping is deliberately wrong, and the
/// distractor each maps to. Columns typed with these score as incorrect.
const WRONG_MAPS: &[(&str, &str)] = &[
    ("mountain", "time.event"),
    ("river", "sports.sports_team"),
    ("video game", "location.location"),
];

const NAME_SYLLABLES: &[&str] = &[
    "an", "bel", "cor", "dra", "el", "fin", "gar", "hol", "ist", "jor", "kel", "lum", "mar", "nor",
    "ost", "per", "quil", "ros", "sal", "tor", "ul", "ver", "win", "xan", "yor", "zel",
];

fn gen_word(rng: &mut SplitMix64) -> String {
    let syllables = 2 + rng.below(2);
    let mut word = String::new();
    for _ in 0..syllables {
        word.push_str(NAME_SYLLABLES[rng.below(NAME_SYLLABLES.len())]);
    }
    let mut chars = word.chars();
    let first = chars.next().unwrap().to_ascii_uppercase();
    std::iter::once(first).chain(chars).collect()
}

fn gen_name(rng: &mut SplitMix64, taken: &mut BTreeSet<String>) -> String {
    loop {
        let mut name = gen_word(rng);
        if rng.chance(1, 2) {
            name.push(' ');
            name.push_str(&gen_word(rng));
        }
        if taken.insert(name.clone()) {
            return name;
        }
    }
}

// ── Generator ────────────────────────────────────────────────────────────

struct SnapshotLines {
    labels: Vec<(String, String)>,
    triples: Vec<(String, String, String)>,
}

impl SnapshotLines {
    fn render(&self, seed: u64) -> String {
        let mut out = format!("# generated KG snapshot (seed {seed})\n");
        for (id, label) in &self.labels {
            out.push_str(&format!("L\t{id}\t{label}\n"));
        }
        for (s, r, o) in &self.triples {
            out.push_str(&format!("T\t{s}\t{r}\t{o}\n"));
        }
        out
    }
}

/// Generates the bundle into `dir` (created if needed). Tables carry ~20
/// rows and one or two gold-linked entity columns; every entity has a
/// label and at least one instance-of edge; the vocabulary covers every
/// mock-mapped type.
pub fn generate_fixture(
    dir: &Path,
    seed: u64,
    n_tables: usize,
) -> Result<FixtureBundle, FixtureError> {
    assert!(n_tables >= 1, "n_tables must be at least 1");
    fs::create_dir_all(dir).map_err(|source| FixtureError::Io {
        path: dir.display().to_string(),
        source,
    })?;

    let mut rng = SplitMix64::new(seed);
    let mut snapshot = SnapshotLines {
        labels: Vec::new(),
        triples: Vec::new(),
    };
    let mut used_types: BTreeSet<usize> = BTreeSet::new();
    let mut taken_names: BTreeSet<String> = BTreeSet::new();
    let mut entity_counter = 1000u64;
    let mut tables = Vec::with_capacity(n_tables);

    for table_idx in 0..n_tables {
        let n_rows = 18 + rng.below(6);
        let second_entity_col = rng.chance(1, 2);
        let n_cols = if second_entity_col { 4 } else { 3 };
        let mut cells = Vec::new();
        let mut gold_labels: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();

        let entity_cols: Vec<usize> = if second_entity_col {
            vec![0, 3]
        } else {
            vec![0]
        };
        for &col in &entity_cols {
            let type_idx = rng.below(TYPE_POOL.len());
            let secondary_idx = (type_idx + 1 + rng.below(TYPE_POOL.len() - 1)) % TYPE_POOL.len();
            used_types.insert(type_idx);
            let (type_id, _, type_vocab) = TYPE_POOL[type_idx];
            let (secondary_id, _, secondary_vocab) = TYPE_POOL[secondary_idx];

            let mut column_entities: Vec<(String, String)> = Vec::new();
            let mut saw_secondary = false;
            for row in 0..n_rows {
                if rng.chance(1, 12) {
                    continue; // empty cell
                }
                let reuse = !column_entities.is_empty() && rng.chance(1, 5);
                let (entity_id, label) = if reuse {
                    column_entities[rng.below(column_entities.len())].clone()
                } else {
                    entity_counter += 1;
                    let entity_id = format!("Q{entity_counter}");
                    let label = gen_name(&mut rng, &mut taken_names);
                    snapshot.labels.push((entity_id.clone(), label.clone()));
                    snapshot.triples.push((
                        entity_id.clone(),
                        "P31".to_string(),
                        type_id.to_string(),
                    ));
                    if rng.chance(1, 4) {
                        used_types.insert(secondary_idx);
                        saw_secondary = true;
                        snapshot.triples.push((
                            entity_id.clone(),
                            "P31".to_string(),
                            secondary_id.to_string(),
                        ));
                    }
                    if rng.chance(1, 6) {
                        let noise_idx = rng.below(TYPE_POOL.len());
                        snapshot.triples.push((
                            entity_id.clone(),
                            "P361".to_string(),
                            TYPE_POOL[noise_idx].0.to_string(),
                        ));
                    }
                    let pair = (entity_id, label);
                    column_entities.push(pair.clone());
                    pair
                };
                cells.push(Cell {
                    row,
                    col,
                    text: label,
                    gold_entity: Some(entity_id),
                });
            }

            let mut gold: BTreeSet<String> = BTreeSet::from([type_vocab.to_string()]);
            if saw_secondary && rng.chance(1, 2) {
                gold.insert(secondary_vocab.to_string());
            }
            gold_labels.insert(col, gold);
        }

        // Filler columns: a rank and a year.
        for row in 0..n_rows {
            cells.push(Cell {
                row,
                col: 1,
                text: (row + 1).to_string(),
                gold_entity: None,
            });
            cells.push(Cell {
                row,
                col: 2,
                text: (1950 + rng.below(70)).to_string(),
                gold_entity: None,
            });
        }

        tables.push(Table::new(
            format!("tbl-{table_idx:03}"),
            n_rows,
            n_cols,
            cells,
            gold_labels,
        )?);
    }

    // Type entities of every used type get labels in pool order.
    let mut type_labels: Vec<(String, String)> = Vec::new();
    for idx in &used_types {
        let (type_id, type_label, _) = TYPE_POOL[*idx];
        type_labels.push((type_id.to_string(), type_label.to_string()));
    }
    snapshot.labels.splice(0..0, type_labels);

    // Mock lookup: used types map to their vocabulary type, except the
    // deliberately wrong ones.
    let wrong: BTreeMap<&str, &str> = WRONG_MAPS.iter().copied().collect();
    let mut lookup: BTreeMap<String, String> = BTreeMap::new();
    for idx in &used_types {
        let (_, type_label, type_vocab) = TYPE_POOL[*idx];
        let target = wrong.get(type_label).copied().unwrap_or(type_vocab);
        lookup.insert(type_label.to_string(), target.to_string());
    }

    let vocabulary: Vec<&str> = TYPE_POOL
        .iter()
        .map(|(_, _, vocab)| *vocab)
        .chain(DISTRACTOR_TYPES.iter().copied())
        .collect();

    let write = |name: &str, contents: &str| -> Result<PathBuf, FixtureError> {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(path)
    };

    let snapshot_path = write("kg.tsv", &snapshot.render(seed))?;
    let dataset_path = dir.join("dataset.jsonl");
    write_dataset(&tables, &dataset_path)?;
    let vocab_path = write("vocab.txt", &format!("{}\n", vocabulary.join("\n")))?;
    let lookup_path = write(
        "mock_lookup.json",
        &format!(
            "{}\n",
            serde_json::to_string_pretty(&lookup).expect("lookup serializes")
        ),
    )?;

    let bundle = FixtureBundle {
        seed,
        n_tables,
        snapshot: snapshot_path,
        dataset: dataset_path,
        vocabulary: vocab_path,
        llm_lookup: lookup_path,
        expected_report: dir.join("expected_report.json"),
        manifest: dir.join("manifest.json"),
    };

    let expected = oracle_recompute(&bundle)?;
    emit_report(&expected, &bundle.expected_report)?;

    let manifest = serde_json::json!({
        "seed": seed,
        "n_tables": n_tables,
        "snapshot": "kg.tsv",
        "dataset": "dataset.jsonl",
        "vocabulary": "vocab.txt",
        "llm_lookup": "mock_lookup.json",
        "expected_report": "expected_report.json",
    });
    fs::write(
        &bundle.manifest,
        format!(
            "{}\n",
            serde_json::to_string_pretty(&manifest).expect("manifest serializes")
        ),
    )
    .map_err(|source| FixtureError::Io {
        path: bundle.manifest.display().to_string(),
        source,
    })?;

    Ok(bundle)
}

/// Reads a bundle back from its manifest.
pub fn load_bundle(manifest_path: &Path) -> Result<FixtureBundle, FixtureError> {
    let text = fs::read_to_string(manifest_path).map_err(|source| FixtureError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|err| FixtureError::Inconsistent(format!("manifest: {err}")))?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let field = |name: &str| -> Result<PathBuf, FixtureError> {
        value
            .get(name)
            .and_then(Value::as_str)
            .map(|rel| dir.join(rel))
            .ok_or_else(|| FixtureError::Inconsistent(format!("manifest lacks {name}")))
    };
    Ok(FixtureBundle {
        seed: value.get("seed").and_then(Value::as_u64).unwrap_or(0),
        n_tables: value.get("n_tables").and_then(Value::as_u64).unwrap_or(0) as usize,
        snapshot: field("snapshot")?,
        dataset: field("dataset")?,
        vocabulary: field("vocabulary")?,
        llm_lookup: field("llm_lookup")?,
        expected_report: field("expected_report")?,
        manifest: manifest_path.to_path_buf(),
    })
}

// ── Independent oracle ───────────────────────────────────────────────────

/// Digit-run-aware string compare, reimplemented locally so the oracle
/// shares no code with the store.
fn oracle_natural_cmp(a: &str, b: &str) -> Ordering {
    let ab = a.as_bytes();
    let bb = b.as_bytes();
    let (mut i, mut j) = (0, 0);
    while i < ab.len() && j < bb.len() {
        if ab[i].is_ascii_digit() && bb[j].is_ascii_digit() {
            let di = ab[i..].iter().take_while(|c| c.is_ascii_digit()).count();
            let dj = bb[j..].iter().take_while(|c| c.is_ascii_digit()).count();
            let ra = std::str::from_utf8(&ab[i..i + di])
                .unwrap()
                .trim_start_matches('0');
            let rb = std::str::from_utf8(&bb[j..j + dj])
                .unwrap()
                .trim_start_matches('0');
            let ord = ra.len().cmp(&rb.len()).then_with(|| ra.cmp(rb));
            if ord != Ordering::Equal {
                return ord;
            }
            i += di;
            j += dj;
        } else {
            if ab[i] != bb[j] {
                return ab[i].cmp(&bb[j]);
            }
            i += 1;
            j += 1;
        }
    }
    if i < ab.len() {
        return Ordering::Greater;
    }
    if j < bb.len() {
        return Ordering::Less;
    }
    a.cmp(b)
}

struct RawCell {
    row: u64,
    text: String,
    gold: Option<String>,
}

/// Recomputes the expected report by naive full scans over the raw bundle
/// files: no indexes, no pipeline code. Mirrors the canonical bundle run
/// (ground-truth links, Entity-Triplets with top-10 truncation, mock LLM,
/// multi-label scoring).
pub fn oracle_recompute(bundle: &FixtureBundle) -> Result<EvalReport, FixtureError> {
    let bad = |message: String| FixtureError::Inconsistent(message);

    // Snapshot: raw line split.
    let snapshot_text =
        fs::read_to_string(&bundle.snapshot).map_err(|source| FixtureError::Io {
            path: bundle.snapshot.display().to_string(),
            source,
        })?;
    let mut kg_labels: BTreeMap<String, String> = BTreeMap::new();
    let mut kg_triples: Vec<(String, String, String)> = Vec::new();
    for line in snapshot_text.lines() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["L", id, label] => {
                kg_labels.insert(id.to_string(), label.to_string());
            }
            ["A", _, _] => {}
            ["T", s, r, o] => {
                let triple = (s.to_string(), r.to_string(), o.to_string());
                if !kg_triples.contains(&triple) {
                    kg_triples.push(triple);
                }
            }
            _ => return Err(bad(format!("snapshot line {line:?} not understood"))),
        }
    }

    // Mock lookup.
    let lookup_text =
        fs::read_to_string(&bundle.llm_lookup).map_err(|source| FixtureError::Io {
            path: bundle.llm_lookup.display().to_string(),
            source,
        })?;
    let lookup: BTreeMap<String, String> =
        serde_json::from_str(&lookup_text).map_err(|err| bad(format!("mock lookup: {err}")))?;

    // Every lookup key must be a producible context label: the label of
    // some instance-of object in the snapshot.
    let producible: BTreeSet<&str> = kg_triples
        .iter()
        .filter(|(_, r, _)| r == "P31")
        .map(|(_, _, o)| kg_labels.get(o).map(String::as_str).unwrap_or(o.as_str()))
        .collect();
    for key in lookup.keys() {
        if !producible.contains(key.as_str()) {
            return Err(bad(format!(
                "lookup key {key:?} matches no producible context label"
            )));
        }
    }

    // Dataset: raw JSONL.
    let dataset_text = fs::read_to_string(&bundle.dataset).map_err(|source| FixtureError::Io {
        path: bundle.dataset.display().to_string(),
        source,
    })?;

    let mut columns: Vec<ColumnRecord> = Vec::new();
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut false_neg = 0u64;
    let mut el_matched = 0u64;
    let mut el_gold = 0u64;

    for line in dataset_text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(line).map_err(|err| bad(format!("dataset line: {err}")))?;
        let table_id = value
            .get("table_id")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("table without table_id".to_string()))?
            .to_string();
        let cells: Vec<RawCell> = value
            .get("cells")
            .and_then(Value::as_array)
            .ok_or_else(|| bad(format!("table {table_id} without cells")))?
            .iter()
            .map(|cell| {
                Ok(RawCell {
                    row: cell
                        .get("row")
                        .and_then(Value::as_u64)
                        .ok_or_else(|| bad(format!("table {table_id}: cell without row")))?,
                    text: cell
                        .get("text")
                        .and_then(Value::as_str)
                        .unwrap_or_default()
                        .to_string(),
                    gold: cell
                        .get("gold_entity")
                        .and_then(Value::as_str)
                        .map(str::to_string),
                })
            })
            .collect::<Result<_, FixtureError>>()?;
        // Yes, this re-walks the cell array per column; naivety is the point.
        let all_cells = value.get("cells").and_then(Value::as_array).unwrap();

        let gold_labels = value
            .get("gold_labels")
            .and_then(Value::as_object)
            .cloned()
            .unwrap_or_default();
        let mut labeled_cols: Vec<usize> = gold_labels
            .keys()
            .map(|k| {
                k.parse::<usize>()
                    .map_err(|_| bad(format!("gold column key {k:?}")))
            })
            .collect::<Result<_, _>>()?;
        labeled_cols.sort_unstable();

        for col in labeled_cols {
            let gold_set: BTreeSet<String> = gold_labels
                .get(&col.to_string())
                .and_then(Value::as_array)
                .map(|labels| {
                    labels
                        .iter()
                        .filter_map(Value::as_str)
                        .map(str::to_string)
                        .collect()
                })
                .unwrap_or_default();
            if gold_set.is_empty() {
                return Err(bad(format!(
                    "table {table_id} column {col}: empty gold set"
                )));
            }

            // Column cells, non-empty text, row order.
            let mut col_cells: Vec<&RawCell> = all_cells
                .iter()
                .zip(&cells)
                .filter(|(raw, _)| raw.get("col").and_then(Value::as_u64) == Some(col as u64))
                .map(|(_, cell)| cell)
                .filter(|cell| !cell.text.is_empty())
                .collect();
            col_cells.sort_by_key(|cell| cell.row);

            // Ground-truth linking plus consistency checks.
            let mut linked: Vec<&str> = Vec::new();
            for cell in &col_cells {
                if let Some(gold) = &cell.gold {
                    if !kg_labels.contains_key(gold) {
                        return Err(bad(format!(
                            "gold entity {gold} of table {table_id} is missing from the snapshot"
                        )));
                    }
                    linked.push(gold);
                    el_gold += 1;
                    el_matched += 1; // ground truth always matches itself
                }
            }

            let predicted: Vec<String>;
            let context_kind;
            let fallback_used;
            if linked.is_empty() {
                predicted = Vec::new();
                context_kind = ContextKind::None;
                fallback_used = true;
            } else {
                // Per-cell type sets by full triple scans.
                let mut type_sets: Vec<Vec<&str>> = Vec::new();
                for entity in &linked {
                    let mut types: Vec<&str> = Vec::new();
                    for (s, r, o) in &kg_triples {
                        if s == entity && r == "P31" && !types.contains(&o.as_str()) {
                            types.push(o);
                        }
                    }
                    type_sets.push(types);
                }
                // Count cells per type, again by rescanning.
                let mut distinct_types: Vec<&str> = Vec::new();
                for types in &type_sets {
                    for ty in types {
                        if !distinct_types.contains(ty) {
                            distinct_types.push(ty);
                        }
                    }
                }
                let mut entries: Vec<(&str, String, usize)> = distinct_types
                    .iter()
                    .map(|ty| {
                        let count = type_sets.iter().filter(|set| set.contains(ty)).count();
                        let label = kg_labels
                            .get(*ty)
                            .cloned()
                            .unwrap_or_else(|| ty.to_string());
                        (*ty, label, count)
                    })
                    .collect();
                entries.sort_by(|a, b| {
                    b.2.cmp(&a.2)
                        .then_with(|| a.1.cmp(&b.1))
                        .then_with(|| oracle_natural_cmp(a.0, b.0))
                });
                entries.truncate(10);

                if entries.is_empty() {
                    predicted = Vec::new();
                    context_kind = ContextKind::None;
                    fallback_used = true;
                } else {
                    let top_label = &entries[0].1;
                    predicted = match lookup.get(top_label) {
                        Some(mapped) => vec![mapped.clone()],
                        None => Vec::new(),
                    };
                    context_kind = ContextKind::EntityTriplets;
                    fallback_used = false;
                }
            }

            // Multi-label confusion counts, naive set arithmetic.
            let predicted_set: BTreeSet<&String> = predicted.iter().collect();
            for label in &predicted_set {
                if gold_set.contains(label.as_str()) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            for label in &gold_set {
                if !predicted_set.contains(label) {
                    false_neg += 1;
                }
            }

            columns.push(ColumnRecord {
                table_id: table_id.clone(),
                col,
                gold: gold_set,
                predicted,
                context_kind,
                fallback_used,
                parse_ok: true,
            });
        }
    }

    if columns.is_empty() {
        return Err(bad("bundle has no labeled columns".to_string()));
    }

    let denominator = 2 * tp + fp + false_neg;
    let micro_f1 = if denominator == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denominator as f64
    };
    let el_accuracy = if el_gold == 0 {
        None
    } else {
        Some(el_matched as f64 / el_gold as f64)
    };

    Ok(EvalReport {
        mode: Mode::Multi,
        micro_f1,
        el_accuracy,
        tp,
        fp,
        false_neg,
        columns,
    })
}
