//! Scoring: micro-F1 over multi-label predictions, the single-label remap
//! protocol, and report emission.
//!
//! Micro-F1 pools confusion counts across all columns and labels:
//! `2*TP / (2*TP + FP + FN)`, with 0/0 defined as 0. Predicted lists are
//! treated as sets, so duplicate labels never change a metric. In the
//! single-label protocol a prediction inside the gold set counts as fully
//! correct; anything else is an incorrect prediction (one FP plus one FN),
//! and an empty prediction is a miss (one FN).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augmentor::Mode;
use crate::processor::ContextKind;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot score an empty record list")]
    EmptyRecords,
    #[error("column {col} of table {table_id} has an empty gold label set")]
    EmptyGold { table_id: String, col: usize },
    #[error("column {col} of table {table_id} carries {n} predictions; single-label scoring takes at most one")]
    MultiPrediction {
        table_id: String,
        col: usize,
        n: usize,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("report {path}: {message}")]
    Format { path: String, message: String },
}

/// Everything recorded about one evaluated column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnRecord {
    pub table_id: String,
    pub col: usize,
    pub gold: BTreeSet<String>,
    pub predicted: Vec<String>,
    pub context_kind: ContextKind,
    pub fallback_used: bool,
    pub parse_ok: bool,
}

/// Aggregated run metrics plus the per-column trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: Mode,
    pub micro_f1: f64,
    /// Entity-linking accuracy over gold-linked cells; `null` when undefined.
    pub el_accuracy: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    pub columns: Vec<ColumnRecord>,
}

fn micro_f1(tp: u64, fp: u64, false_neg: u64) -> f64 {
    let denominator = 2 * tp + fp + false_neg;
    if denominator == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / denominator as f64
}

fn check_gold(record: &ColumnRecord) -> Result<(), EvalError> {
    if record.gold.is_empty() {
        return Err(EvalError::EmptyGold {
            table_id: record.table_id.clone(),
            col: record.col,
        });
    }
    Ok(())
}

/// Multi-label micro-F1: per column, TP = |predicted ∩ gold|,
/// FP = |predicted \ gold|, FN = |gold \ predicted|, pooled over columns.
pub fn micro_f1_multi(records: Vec<ColumnRecord>) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut false_neg = 0u64;
    for record in &records {
        check_gold(record)?;
        let predicted: BTreeSet<&String> = record.predicted.iter().collect();
        for label in &predicted {
            if record.gold.contains(*label) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        for label in &record.gold {
            if !predicted.contains(label) {
                false_neg += 1;
            }
        }
    }
    Ok(EvalReport {
        mode: Mode::Multi,
        micro_f1: micro_f1(tp, fp, false_neg),
        el_accuracy: None,
        tp,
        fp,
        false_neg,
        columns: records,
    })
}

/// Single-label protocol: a prediction inside the gold set is fully
/// correct (TP); outside it is incorrect (FP and FN); an empty prediction
/// is a miss (FN). Records carrying more than one prediction are an error.
pub fn micro_f1_single(records: Vec<ColumnRecord>) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut false_neg = 0u64;
    for record in &records {
        check_gold(record)?;
        match record.predicted.as_slice() {
            [] => false_neg += 1,
            [label] => {
                if record.gold.contains(label) {
                    tp += 1;
                } else {
                    fp += 1;
                    false_neg += 1;
                }
            }
            many => {
                return Err(EvalError::MultiPrediction {
                    table_id: record.table_id.clone(),
                    col: record.col,
                    n: many.len(),
                })
            }
        }
    }
    Ok(EvalReport {
        mode: Mode::Single,
        micro_f1: micro_f1(tp, fp, false_neg),
        el_accuracy: None,
        tp,
        fp,
        false_neg,
        columns: records,
    })
}

/// Writes the report as pretty-printed JSON with stable key order.
pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut body = serde_json::to_string_pretty(report).map_err(|err| EvalError::Format {
        path: path.display().to_string(),
        message: err.to_string(),
    })?;
    body.push('\n');
    fs::write(path, body).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_report(path: impl AsRef<Path>) -> Result<EvalReport, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|err| EvalError::Format {
        path: path.display().to_string(),
        message: err.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(gold: &[&str], predicted: &[&str]) -> ColumnRecord {
        ColumnRecord {
            table_id: "t1".to_string(),
            col: 0,
            gold: gold.iter().map(|s| s.to_string()).collect(),
            predicted: predicted.iter().map(|s| s.to_string()).collect(),
            context_kind: ContextKind::EntityTriplets,
            fallback_used: false,
            parse_ok: true,
        }
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let report = micro_f1_multi(vec![record(&["a", "b"], &["a", "b"])]).unwrap();
        assert_eq!(report.micro_f1, 1.0);
        assert_eq!((report.tp, report.fp, report.false_neg), (2, 0, 0));
    }

    #[test]
    fn hand_counted_two_column_case() {
        let records = vec![record(&["a", "b"], &["a"]), record(&["c"], &["c", "d"])];
        let report = micro_f1_multi(records).unwrap();
        assert_eq!((report.tp, report.fp, report.false_neg), (2, 1, 1));
        assert!((report.micro_f1 - 2.0 * 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn all_empty_predictions_score_zero() {
        let records = vec![record(&["a"], &[]), record(&["b"], &[])];
        let report = micro_f1_multi(records).unwrap();
        assert_eq!(report.micro_f1, 0.0);
    }

    #[test]
    fn empty_record_list_errors() {
        assert!(matches!(
            micro_f1_multi(vec![]),
            Err(EvalError::EmptyRecords)
        ));
        assert!(matches!(
            micro_f1_single(vec![]),
            Err(EvalError::EmptyRecords)
        ));
    }

    #[test]
    fn empty_gold_set_errors() {
        let mut r = record(&["a"], &[]);
        r.gold.clear();
        assert!(matches!(
            micro_f1_multi(vec![r]),
            Err(EvalError::EmptyGold { .. })
        ));
    }

    #[test]
    fn single_remap_counts_in_set_prediction_as_correct() {
        let report = micro_f1_single(vec![record(&["a", "b"], &["a"])]).unwrap();
        assert_eq!((report.tp, report.fp, report.false_neg), (1, 0, 0));
        assert_eq!(report.micro_f1, 1.0);
    }

    #[test]
    fn single_remap_counts_out_of_set_as_fp_and_fn() {
        let report = micro_f1_single(vec![record(&["a"], &["d"])]).unwrap();
        assert_eq!((report.tp, report.fp, report.false_neg), (0, 1, 1));
    }

    #[test]
    fn single_remap_counts_empty_prediction_as_fn() {
        let report = micro_f1_single(vec![record(&["a"], &[])]).unwrap();
        assert_eq!((report.tp, report.fp, report.false_neg), (0, 0, 1));
    }

    #[test]
    fn single_rejects_multiple_predictions() {
        assert!(matches!(
            micro_f1_single(vec![record(&["a"], &["a", "b"])]),
            Err(EvalError::MultiPrediction { n: 2, .. })
        ));
    }

    #[test]
    fn four_columns_three_correct_scores_three_quarters() {
        let records = vec![
            record(&["a"], &["a"]),
            record(&["b"], &["b"]),
            record(&["c"], &["c"]),
            record(&["d"], &["x"]),
        ];
        let report = micro_f1_single(records).unwrap();
        assert!((report.micro_f1 - 2.0 * 3.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn report_round_trips_through_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let mut report = micro_f1_multi(vec![record(&["a"], &["a"])]).unwrap();
        report.el_accuracy = Some(1.0);
        emit_report(&report, &path).unwrap();
        assert_eq!(load_report(&path).unwrap(), report);
    }

    #[test]
    fn undefined_el_accuracy_serializes_as_null() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let report = micro_f1_multi(vec![record(&["a"], &["a"])]).unwrap();
        emit_report(&report, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"el_accuracy\": null"));
    }

    fn arbitrary_records() -> impl Strategy<Value = Vec<ColumnRecord>> {
        proptest::collection::vec(
            (
                proptest::collection::btree_set("[a-e]", 1..4),
                proptest::collection::vec("[a-g]", 0..4),
            ),
            1..8,
        )
        .prop_map(|pairs| {
            pairs
                .into_iter()
                .enumerate()
                .map(|(idx, (gold, predicted))| ColumnRecord {
                    table_id: format!("t{idx}"),
                    col: 0,
                    gold,
                    predicted,
                    context_kind: ContextKind::None,
                    fallback_used: false,
                    parse_ok: true,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn metric_is_bounded_and_permutation_invariant(records in arbitrary_records()) {
            let report = micro_f1_multi(records.clone()).unwrap();
            prop_assert!((0.0..=1.0).contains(&report.micro_f1));
            prop_assert_eq!(report.micro_f1 == 1.0, report.fp == 0 && report.false_neg == 0);

            let mut reversed = records;
            reversed.reverse();
            let report_rev = micro_f1_multi(reversed).unwrap();
            prop_assert_eq!(report.micro_f1, report_rev.micro_f1);
            prop_assert_eq!(
                (report.tp, report.fp, report.false_neg),
                (report_rev.tp, report_rev.fp, report_rev.false_neg)
            );
        }

        #[test]
        fn duplicate_predicted_labels_do_not_change_metrics(records in arbitrary_records()) {
            let doubled: Vec<ColumnRecord> = records
                .iter()
                .cloned()
                .map(|mut r| {
                    let dup = r.predicted.clone();
                    r.predicted.extend(dup);
                    r
                })
                .collect();
            let base = micro_f1_multi(records).unwrap();
            let dup = micro_f1_multi(doubled).unwrap();
            prop_assert_eq!(base.micro_f1, dup.micro_f1);
            prop_assert_eq!(
                (base.tp, base.fp, base.false_neg),
                (dup.tp, dup.fp, dup.false_neg)
            );
        }

        #[test]
        fn single_mode_equals_accuracy_when_all_predictions_nonempty(
            outcomes in proptest::collection::vec(proptest::bool::ANY, 1..12)
        ) {
            let records: Vec<ColumnRecord> = outcomes
                .iter()
                .enumerate()
                .map(|(idx, correct)| {
                    let gold = BTreeSet::from(["g".to_string()]);
                    let predicted = if *correct { vec!["g".to_string()] } else { vec!["x".to_string()] };
                    ColumnRecord {
                        table_id: format!("t{idx}"),
                        col: 0,
                        gold,
                        predicted,
                        context_kind: ContextKind::None,
                        fallback_used: false,
                        parse_ok: true,
                    }
                })
                .collect();
            let n = records.len() as f64;
            let correct = outcomes.iter().filter(|c| **c).count() as f64;
            let report = micro_f1_single(records).unwrap();
            // Naive accuracy oracle.
            prop_assert!((report.micro_f1 - correct / n).abs() < 1e-12);
        }
    }
}
