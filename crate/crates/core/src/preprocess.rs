//! Cleaning rules applied between the merge and the learning stages.
//!
//! Stages run in a fixed order: irrelevant-column drop, missing-target drop,
//! sparse-column drop, per-participant mean imputation, variant selection.
//! Each stage appends a [`StageRecord`] to the table so the order can be
//! checked after the fact with [`check_stage_order`].

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, Dataset, FeatureTable, Stage, StageRecord};
use crate::error::{ForgeError, Result};

/// Survey bookkeeping columns with no predictive meaning.
pub const IRRELEVANT_COLUMNS: [&str; 4] = [
    "survey_name",
    "survey_sent_time",
    "survey_start_time",
    "survey_finish_time",
];

/// Columns never collected for many participants. A listed name also covers
/// its derived columns, i.e. any column named `<name>_...`.
pub const SPARSE_COLUMNS: [&str; 15] = [
    "act_still",
    "light_mean",
    "garmin_hr_min",
    "garmin_hr_max",
    "garmin_hr_median",
    "garmin_hr_mean",
    "garmin_hr_std",
    "ave_hr_at_work",
    "ave_hr_at_desk",
    "ave_hr_not_at_work",
    "call_in_num",
    "call_in_duration",
    "call_out_num",
    "call_out_duration",
    "call_miss_num",
];

/// Survey answers other than stress: five personality traits, anxiety,
/// self-reported sleep, positive and negative affect, and total phone
/// activity duration.
pub const PERSONALITY_COLUMNS: [&str; 10] = [
    "anxiety",
    "sleep",
    "positive_affect",
    "negative_affect",
    "extraversion",
    "agreeableness",
    "conscientiousness",
    "neuroticism",
    "openness",
    "total_phone_activity_duration",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    WithPersonality,
    WithoutPersonality,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::WithPersonality => "with_personality",
            Variant::WithoutPersonality => "without_personality",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with" | "with_personality" => Ok(Variant::WithPersonality),
            "without" | "without_personality" => Ok(Variant::WithoutPersonality),
            other => Err(ForgeError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SparsePolicy {
    /// Drop the named columns and their derivatives.
    Names { columns: Vec<String> },
    /// Drop columns observed for fewer than this fraction of participants.
    Coverage { min_participant_fraction: f64 },
}

impl Default for SparsePolicy {
    fn default() -> Self {
        SparsePolicy::Names {
            columns: SPARSE_COLUMNS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

fn matches_base(name: &str, base: &str) -> bool {
    name == base
        || name
            .strip_prefix(base)
            .is_some_and(|rest| rest.starts_with('_'))
}

fn keep_all_but(table: &FeatureTable, drop: &[usize]) -> FeatureTable {
    let keep: Vec<usize> = (0..table.n_data_columns())
        .filter(|j| !drop.contains(j))
        .collect();
    table.select_columns(&keep)
}

fn record_for(stage: Stage, rule: &str, before: &FeatureTable) -> StageRecord {
    let mut r = StageRecord::new(stage, rule);
    r.rows_before = before.n_rows();
    r.columns_before = before.n_columns();
    r
}

fn finish(mut record: StageRecord, table: FeatureTable) -> FeatureTable {
    record.rows_after = table.n_rows();
    record.columns_after = table.n_columns();
    table.stamp(record)
}

/// Removes survey name and survey timing columns. Absent names are warnings.
pub fn drop_irrelevant(table: &FeatureTable) -> FeatureTable {
    let mut record = record_for(Stage::DropIrrelevant, "survey metadata columns", table);
    let mut drop = Vec::new();
    for name in IRRELEVANT_COLUMNS {
        match table.column_index(name) {
            Some(j) => {
                drop.push(j);
                record.dropped_columns.push(name.to_string());
            }
            None => record.warnings.push(format!("column `{name}` not present")),
        }
    }
    finish(record, keep_all_but(table, &drop))
}

/// Removes rows whose stress label is missing.
pub fn drop_missing_target(table: &FeatureTable) -> Result<FeatureTable> {
    let target = table.target_index()?;
    let mut record = record_for(Stage::DropMissingTarget, "rows without a stress label", table);
    record.dropped_rows = table
        .rows()
        .iter()
        .filter(|r| r.get(target).is_none())
        .map(|r| r.key.clone())
        .collect();
    let kept = table.filter_rows(|_, r| r.get(target).is_some());
    if kept.n_rows() == 0 && table.n_rows() > 0 {
        record.warnings.push("every row lacked a label; table is now empty".into());
    }
    Ok(finish(record, kept))
}

/// Removes columns by name list or by participant coverage.
pub fn drop_sparse_columns(table: &FeatureTable, policy: &SparsePolicy) -> FeatureTable {
    let candidates = || {
        table
            .columns()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind != ColumnKind::Target)
    };
    let (rule, drop): (String, Vec<usize>) = match policy {
        SparsePolicy::Names { columns } => (
            format!("named sparse columns and derivatives ({} names)", columns.len()),
            candidates()
                .filter(|(_, c)| columns.iter().any(|b| matches_base(&c.name, b)))
                .map(|(j, _)| j)
                .collect(),
        ),
        SparsePolicy::Coverage {
            min_participant_fraction,
        } => {
            let groups = table.rows_by_participant();
            let n = groups.len().max(1) as f64;
            let drop = candidates()
                .filter(|(j, _)| {
                    let covered = groups
                        .iter()
                        .filter(|(_, rows)| rows.iter().any(|&i| table.rows()[i].get(*j).is_some()))
                        .count();
                    (covered as f64 / n) < *min_participant_fraction
                })
                .map(|(j, _)| j)
                .collect();
            (
                format!("participant coverage below {min_participant_fraction}"),
                drop,
            )
        }
    };
    let mut record = record_for(Stage::DropSparse, &rule, table);
    record.dropped_columns = drop
        .iter()
        .map(|&j| table.columns()[j].name.clone())
        .collect();
    finish(record, keep_all_but(table, &drop))
}

/// Fills each missing feature cell with the mean of the same participant's
/// observed values in that column (sum in row order, then divide).
///
/// Participants are processed in parallel; the result does not depend on
/// scheduling because each participant's means are computed independently.
pub fn impute_participant_mean(table: &FeatureTable) -> Result<FeatureTable> {
    let columns: Vec<usize> = table
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| matches!(c.kind, ColumnKind::Feature | ColumnKind::ExcludedGroundTruth))
        .map(|(j, _)| j)
        .collect();
    let groups = table.rows_by_participant();
    let rows = table.rows();

    let fills: Vec<Result<Vec<(usize, usize, f64)>>> = groups
        .par_iter()
        .map(|(participant, idx)| {
            let mut out = Vec::new();
            for &j in &columns {
                let mut sum = 0.0;
                let mut count = 0usize;
                let mut gaps = Vec::new();
                for &i in idx {
                    match rows[i].get(j) {
                        Some(v) => {
                            sum += v;
                            count += 1;
                        }
                        None => gaps.push(i),
                    }
                }
                if gaps.is_empty() {
                    continue;
                }
                if count == 0 {
                    return Err(ForgeError::Unimputable {
                        participant: participant.clone(),
                        column: table.columns()[j].name.clone(),
                    });
                }
                let mean = sum / count as f64;
                out.extend(gaps.into_iter().map(|i| (i, j, mean)));
            }
            Ok(out)
        })
        .collect();

    let mut new_rows = rows.to_vec();
    let mut changed = 0;
    for fill in fills {
        for (i, j, v) in fill? {
            new_rows[i].set(j, Some(v));
            changed += 1;
        }
    }
    let mut record = record_for(Stage::Impute, "per-participant column mean", table);
    record.cells_changed = changed;
    Ok(finish(record, table.with_rows(new_rows)))
}

/// Keeps or drops the non-target survey columns and converts the result to a
/// dense [`Dataset`].
pub fn select_variant(table: &FeatureTable, variant: Variant) -> Result<(FeatureTable, Dataset)> {
    let mut record = record_for(Stage::SelectVariant, variant.as_str(), table);
    let selected = match variant {
        Variant::WithoutPersonality => {
            let drop: Vec<usize> = table
                .columns()
                .iter()
                .enumerate()
                .filter(|(_, c)| c.kind == ColumnKind::ExcludedGroundTruth)
                .map(|(j, _)| j)
                .collect();
            record.dropped_columns = drop
                .iter()
                .map(|&j| table.columns()[j].name.clone())
                .collect();
            keep_all_but(table, &drop)
        }
        Variant::WithPersonality => {
            let columns = table
                .columns()
                .iter()
                .cloned()
                .map(|mut c| {
                    if c.kind == ColumnKind::ExcludedGroundTruth {
                        c.kind = ColumnKind::Feature;
                    }
                    c
                })
                .collect();
            table.clone().with_columns(columns)
        }
    };
    let selected = finish(record, selected);
    let dataset = Dataset::from_table(&selected)?;
    Ok((selected, dataset))
}

/// Runs every stage in order.
pub fn preprocess(
    table: &FeatureTable,
    variant: Variant,
    policy: &SparsePolicy,
) -> Result<(FeatureTable, Dataset)> {
    let t = drop_irrelevant(table);
    let t = drop_missing_target(&t)?;
    let t = drop_sparse_columns(&t, policy);
    let t = impute_participant_mean(&t)?;
    select_variant(&t, variant)
}

/// Fails if the preprocessing stages recorded on a table ran out of order.
pub fn check_stage_order(records: &[StageRecord]) -> Result<()> {
    let stages: Vec<Stage> = records
        .iter()
        .map(|r| r.stage)
        .filter(|s| (Stage::DropIrrelevant..=Stage::SelectVariant).contains(s))
        .collect();
    for pair in stages.windows(2) {
        if pair[0] >= pair[1] {
            return Err(ForgeError::Config(format!(
                "stage `{}` ran after `{}`",
                pair[1].as_str(),
                pair[0].as_str()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use chrono::NaiveDate;
    use proptest::prelude::*;

    use super::*;
    use crate::dataset::{ColumnSpec, Modality, RecordKey, Row};

    fn key(p: &str, d: u32) -> RecordKey {
        RecordKey::new(p, NaiveDate::from_ymd_opt(2018, 3, d).unwrap())
    }

    fn table(cols: Vec<ColumnSpec>, rows: Vec<(RecordKey, Vec<Option<f64>>)>) -> FeatureTable {
        FeatureTable::new_unchecked(
            cols,
            rows.into_iter().map(|(k, c)| Row::from_cells(k, c)).collect(),
        )
    }

    fn target() -> ColumnSpec {
        ColumnSpec::new("stress", Modality::GroundTruth, ColumnKind::Target)
    }

    fn gt(name: &str) -> ColumnSpec {
        ColumnSpec::new(name, Modality::GroundTruth, ColumnKind::ExcludedGroundTruth)
    }

    #[test]
    fn drops_all_four_metadata_columns_and_is_idempotent() {
        let mut cols: Vec<ColumnSpec> = IRRELEVANT_COLUMNS.iter().map(|n| gt(n)).collect();
        cols.push(target());
        let t = table(cols, vec![(key("p", 1), vec![Some(1.0); 5])]);
        let once = drop_irrelevant(&t);
        assert_eq!(once.n_data_columns(), 1);
        assert!(once.provenance()[0].warnings.is_empty());
        let twice = drop_irrelevant(&once);
        assert_eq!(twice.columns(), once.columns());
        assert_eq!(twice.provenance()[1].warnings.len(), 4);
    }

    #[test]
    fn partial_metadata_gives_two_drops_two_warnings() {
        let t = table(
            vec![gt("survey_name"), gt("survey_start_time"), target()],
            vec![(key("p", 1), vec![Some(1.0); 3])],
        );
        let out = drop_irrelevant(&t);
        let rec = &out.provenance()[0];
        assert_eq!(rec.dropped_columns.len(), 2);
        assert_eq!(rec.warnings.len(), 2);
        assert_eq!(out.n_data_columns(), 1);
    }

    #[test]
    fn missing_labels_are_dropped_and_counted() {
        let t = table(
            vec![ColumnSpec::feature("x", Modality::Sleep), target()],
            vec![
                (key("p", 1), vec![Some(1.0), None]),
                (key("p", 2), vec![Some(1.0), Some(2.0)]),
            ],
        );
        let out = drop_missing_target(&t).unwrap();
        assert_eq!(out.n_rows(), 1);
        assert_eq!(out.provenance()[0].dropped_rows, vec![key("p", 1)]);

        let unchanged = drop_missing_target(&out).unwrap();
        assert_eq!(unchanged.rows(), out.rows());
    }

    #[test]
    fn all_missing_labels_leave_empty_table_with_report() {
        let t = table(
            vec![target()],
            vec![(key("p", 1), vec![None]), (key("q", 1), vec![None])],
        );
        let out = drop_missing_target(&t).unwrap();
        assert_eq!(out.n_rows(), 0);
        assert_eq!(out.provenance()[0].dropped_rows.len(), 2);
        assert_eq!(out.provenance()[0].warnings.len(), 1);
    }

    #[test]
    fn no_target_is_a_configuration_error() {
        let t = table(vec![ColumnSpec::feature("x", Modality::Sleep)], vec![]);
        assert!(matches!(drop_missing_target(&t), Err(ForgeError::NoTarget)));
    }

    #[test]
    fn sparse_names_cover_derivatives_only() {
        let names = [
            "act_still",
            "act_still_ep1",
            "act_stillness",
            "call_in_num_ep0",
            "garmin_hr_mean",
            "hr_resting",
        ];
        let mut cols: Vec<ColumnSpec> = names
            .iter()
            .map(|n| ColumnSpec::feature(*n, Modality::PhoneActivity))
            .collect();
        cols.push(target());
        let t = table(cols, vec![(key("p", 1), vec![Some(0.0); 7])]);
        let out = drop_sparse_columns(&t, &SparsePolicy::default());
        let kept: Vec<_> = out.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(kept, ["act_stillness", "hr_resting", "stress"]);

        let clean = drop_sparse_columns(&out, &SparsePolicy::default());
        assert_eq!(clean.columns(), out.columns());
    }

    #[test]
    fn coverage_threshold_drops_thinly_covered_column() {
        // 10 participants; column `a` observed for 3 of them (30%), `b` for all.
        let rows = (0..10)
            .map(|p| {
                let a = (p < 3).then_some(1.0);
                (key(&format!("p{p}"), 1), vec![a, Some(2.0), Some(1.0)])
            })
            .collect();
        let t = table(
            vec![
                ColumnSpec::feature("a", Modality::Hr),
                ColumnSpec::feature("b", Modality::Hr),
                target(),
            ],
            rows,
        );
        let out = drop_sparse_columns(
            &t,
            &SparsePolicy::Coverage {
                min_participant_fraction: 0.5,
            },
        );
        assert_eq!(out.provenance()[0].dropped_columns, vec!["a"]);
    }

    #[test]
    fn mean_of_two_and_four_is_three() {
        let t = table(
            vec![ColumnSpec::feature("x", Modality::Sleep), target()],
            vec![
                (key("p", 1), vec![Some(2.0), Some(1.0)]),
                (key("p", 2), vec![None, Some(1.0)]),
                (key("p", 3), vec![Some(4.0), Some(1.0)]),
            ],
        );
        let out = impute_participant_mean(&t).unwrap();
        assert_eq!(out.rows()[1].get(0), Some(3.0));
        assert_eq!(out.provenance()[0].cells_changed, 1);
    }

    #[test]
    fn complete_table_is_unchanged_by_imputation() {
        let t = table(
            vec![ColumnSpec::feature("x", Modality::Sleep), target()],
            vec![(key("p", 1), vec![Some(2.0), Some(1.0)])],
        );
        assert_eq!(impute_participant_mean(&t).unwrap().rows(), t.rows());
    }

    #[test]
    fn single_observation_fills_everything() {
        let t = table(
            vec![ColumnSpec::feature("x", Modality::Sleep), target()],
            vec![
                (key("p", 1), vec![None, Some(1.0)]),
                (key("p", 2), vec![Some(5.5), Some(1.0)]),
                (key("p", 3), vec![None, Some(1.0)]),
            ],
        );
        let out = impute_participant_mean(&t).unwrap();
        assert!(out.rows().iter().all(|r| r.get(0) == Some(5.5)));
    }

    #[test]
    fn participant_without_observations_is_unimputable() {
        let t = table(
            vec![ColumnSpec::feature("x", Modality::Sleep), target()],
            vec![
                (key("p", 1), vec![Some(1.0), Some(1.0)]),
                (key("q", 1), vec![None, Some(1.0)]),
            ],
        );
        match impute_participant_mean(&t).unwrap_err() {
            ForgeError::Unimputable { participant, column } => {
                assert_eq!((participant.as_str(), column.as_str()), ("q", "x"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn imputation_matches_spreadsheet_recompute() {
        // Participants interleaved to make sure grouping is by id, not position.
        let data = [
            ("a", 1, Some(1.0), None),
            ("b", 1, Some(10.0), Some(-1.0)),
            ("a", 2, None, Some(4.0)),
            ("b", 2, None, Some(-3.0)),
            ("a", 3, Some(2.5), Some(8.0)),
            ("b", 3, Some(20.0), None),
        ];
        let t = table(
            vec![
                ColumnSpec::feature("x", Modality::Sleep),
                ColumnSpec::feature("y", Modality::Hr),
                target(),
            ],
            data.iter()
                .map(|(p, d, x, y)| (key(p, *d), vec![*x, *y, Some(1.0)]))
                .collect(),
        );
        let out = impute_participant_mean(&t).unwrap();
        // a: x mean (1 + 2.5) / 2, y mean (4 + 8) / 2; b: x (10 + 20) / 2, y (-1 - 3) / 2
        let expect = [
            (1.0, 6.0),
            (10.0, -1.0),
            (1.75, 4.0),
            (15.0, -3.0),
            (2.5, 8.0),
            (20.0, -2.0),
        ];
        for (row, (x, y)) in out.rows().iter().zip(expect) {
            assert_eq!(row.get(0), Some(x));
            assert_eq!(row.get(1), Some(y));
        }
    }

    #[test]
    fn variants_keep_or_drop_survey_columns() {
        let cols = vec![
            ColumnSpec::feature("x", Modality::Sleep),
            gt("anxiety"),
            gt("openness"),
            target(),
        ];
        let t = table(cols, vec![(key("p", 1), vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)])]);
        let (without, ds) = select_variant(&t, Variant::WithoutPersonality).unwrap();
        assert_eq!(without.n_data_columns(), 2);
        assert_eq!(ds.feature_names, vec!["x"]);
        assert_eq!(ds.labels, vec![4]);
        let (with, ds) = select_variant(&t, Variant::WithPersonality).unwrap();
        assert_eq!(with.n_data_columns(), 4);
        assert_eq!(ds.n_features(), 3);
        assert!(with.columns().iter().all(|c| c.kind != ColumnKind::ExcludedGroundTruth));

        let bare = table(
            vec![ColumnSpec::feature("x", Modality::Sleep), target()],
            vec![(key("p", 1), vec![Some(1.0), Some(2.0)])],
        );
        let (out, _) = select_variant(&bare, Variant::WithoutPersonality).unwrap();
        assert_eq!(out.columns(), bare.columns());
    }

    #[test]
    fn stage_order_is_checked() {
        let t = table(
            vec![ColumnSpec::feature("x", Modality::Sleep), target()],
            vec![(key("p", 1), vec![Some(1.0), Some(2.0)])],
        );
        let (out, _) = preprocess(&t, Variant::WithPersonality, &SparsePolicy::default()).unwrap();
        let stages: Vec<Stage> = out.provenance().iter().map(|r| r.stage).collect();
        assert_eq!(
            stages,
            [
                Stage::DropIrrelevant,
                Stage::DropMissingTarget,
                Stage::DropSparse,
                Stage::Impute,
                Stage::SelectVariant
            ]
        );
        check_stage_order(out.provenance()).unwrap();

        let wrong = impute_participant_mean(&t).unwrap();
        let wrong = drop_irrelevant(&wrong);
        assert!(check_stage_order(wrong.provenance()).is_err());
    }

    #[test]
    fn variant_parses_short_and_long_names() {
        assert_eq!("with".parse::<Variant>().unwrap(), Variant::WithPersonality);
        assert_eq!(
            "without_personality".parse::<Variant>().unwrap(),
            Variant::WithoutPersonality
        );
        assert!("sometimes".parse::<Variant>().is_err());
    }

    proptest! {
        #[test]
        fn imputation_preserves_observed_means(
            cells in proptest::collection::vec(
                (0usize..4, proptest::option::weighted(0.7, -100.0f64..100.0)),
                1..40,
            )
        ) {
            // Force one observation per participant so every column is imputable.
            let mut rows = Vec::new();
            let mut seen = [false; 4];
            for (i, (p, v)) in cells.iter().enumerate() {
                let v = if seen[*p] { *v } else { Some(v.unwrap_or(1.0)) };
                seen[*p] = true;
                rows.push((key(&format!("p{p}"), 1 + (i as u32 % 28)).clone(), vec![v, Some(1.0)]));
            }
            // keys must be unique
            let mut uniq = std::collections::HashSet::new();
            rows.retain(|(k, _)| uniq.insert(k.clone()));
            let t = table(vec![ColumnSpec::feature("x", Modality::Sleep), target()], rows);
            prop_assume!(impute_participant_mean(&t).is_ok());
            let out = impute_participant_mean(&t).unwrap();
            prop_assert_eq!(out.missing_count(), 0);
            for (p, idx) in t.rows_by_participant() {
                let observed: Vec<f64> = idx.iter().filter_map(|&i| t.rows()[i].get(0)).collect();
                let before = observed.iter().sum::<f64>() / observed.len() as f64;
                let after: Vec<f64> = idx.iter().map(|&i| out.rows()[i].get(0).unwrap()).collect();
                let after = after.iter().sum::<f64>() / after.len() as f64;
                prop_assert!((before - after).abs() <= 1e-9 * before.abs().max(1.0), "participant {}", p);
            }
        }
    }
}
