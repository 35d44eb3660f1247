//! Core tabular types shared by every stage of the pipeline.
//!
//! A [`FeatureTable`] holds one row per (participant, day). Key columns live in
//! [`RecordKey`]; every other column is numeric with an explicit missing mask,
//! so a missing cell is never confused with a sentinel number.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};

/// Names of the two key columns every table exposes.
pub const PARTICIPANT_COLUMN: &str = "participant_id";
pub const DATE_COLUMN: &str = "date";

/// Source category of a column, in the order the data files are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Weather,
    Activity,
    Daily,
    Hr,
    StressSensor,
    Sleep,
    PhoneActivity,
    HrWorkdeskHome,
    GroundTruth,
}

impl Modality {
    pub const ALL: [Modality; 9] = [
        Modality::Weather,
        Modality::Activity,
        Modality::Daily,
        Modality::Hr,
        Modality::StressSensor,
        Modality::Sleep,
        Modality::PhoneActivity,
        Modality::HrWorkdeskHome,
        Modality::GroundTruth,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Weather => "weather",
            Modality::Activity => "activity",
            Modality::Daily => "daily",
            Modality::Hr => "hr",
            Modality::StressSensor => "stress_sensor",
            Modality::Sleep => "sleep",
            Modality::PhoneActivity => "phone_activity",
            Modality::HrWorkdeskHome => "hr_workdesk_home",
            Modality::GroundTruth => "ground_truth",
        }
    }

    /// Position in the canonical merge order.
    pub fn order(self) -> usize {
        Modality::ALL.iter().position(|m| *m == self).unwrap()
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ForgeError::Config(format!("unknown modality `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Feature,
    Key,
    Target,
    /// Survey answers other than the target. They become features only in
    /// the with-personality variant.
    ExcludedGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub modality: Modality,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, modality: Modality, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.into(),
            modality,
            kind,
        }
    }

    pub fn feature(name: impl Into<String>, modality: Modality) -> Self {
        Self::new(name, modality, ColumnKind::Feature)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub participant_id: String,
    pub date: NaiveDate,
}

impl RecordKey {
    pub fn new(participant_id: impl Into<String>, date: NaiveDate) -> Self {
        RecordKey {
            participant_id: participant_id.into(),
            date,
        }
    }
}

/// Ordinal stress class, 1 (very low) to 5 (very high).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StressLabel(u8);

impl StressLabel {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(class: u8) -> Option<Self> {
        (Self::MIN..=Self::MAX).contains(&class).then_some(StressLabel(class))
    }

    /// Accepts only exact integers in 1..=5.
    pub fn from_value(value: f64) -> Option<Self> {
        if value.fract() != 0.0 || !(1.0..=5.0).contains(&value) {
            return None;
        }
        Self::new(value as u8)
    }

    pub fn class(self) -> u8 {
        self.0
    }
}

/// One table row. `missing[j]` marks an absent value; the matching entry in
/// `values` is then always `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub key: RecordKey,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl Row {
    pub fn from_cells(key: RecordKey, cells: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut values = Vec::new();
        let mut missing = Vec::new();
        for cell in cells {
            values.push(cell.unwrap_or(0.0));
            missing.push(cell.is_none());
        }
        Row {
            key,
            values,
            missing,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, column: usize) -> Option<f64> {
        (!self.missing[column]).then(|| self.values[column])
    }

    pub fn set(&mut self, column: usize, value: Option<f64>) {
        self.values[column] = value.unwrap_or(0.0);
        self.missing[column] = value.is_none();
    }

    pub fn cells(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.values.len()).map(|j| self.get(j))
    }

    fn select(&self, keep: &[usize]) -> Row {
        Row {
            key: self.key.clone(),
            values: keep.iter().map(|&j| self.values[j]).collect(),
            missing: keep.iter().map(|&j| self.missing[j]).collect(),
        }
    }

    pub(crate) fn extend_from(&mut self, other: &Row) {
        self.values.extend_from_slice(&other.values);
        self.missing.extend_from_slice(&other.missing);
    }
}

/// Pipeline stage that produced a [`StageRecord`]. Declaration order is the
/// order the preprocessing stages must run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Merge,
    DropIrrelevant,
    DropMissingTarget,
    DropSparse,
    Impute,
    SelectVariant,
    Balance,
    Split,
    SelectFeatures,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Merge => "merge",
            Stage::DropIrrelevant => "drop_irrelevant",
            Stage::DropMissingTarget => "drop_missing_target",
            Stage::DropSparse => "drop_sparse",
            Stage::Impute => "impute",
            Stage::SelectVariant => "select_variant",
            Stage::Balance => "balance",
            Stage::Split => "split",
            Stage::SelectFeatures => "select_features",
        }
    }
}

/// Provenance of one transform: what it removed and anything worth flagging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub rule: String,
    pub rows_before: usize,
    pub rows_after: usize,
    pub columns_before: usize,
    pub columns_after: usize,
    #[serde(default)]
    pub dropped_columns: Vec<String>,
    #[serde(default)]
    pub dropped_rows: Vec<RecordKey>,
    #[serde(default)]
    pub cells_changed: usize,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl StageRecord {
    pub fn new(stage: Stage, rule: impl Into<String>) -> Self {
        StageRecord {
            stage,
            rule: rule.into(),
            rows_before: 0,
            rows_after: 0,
            columns_before: 0,
            columns_after: 0,
            dropped_columns: Vec::new(),
            dropped_rows: Vec::new(),
            cells_changed: 0,
            warnings: Vec::new(),
        }
    }
}

/// Immutable rectangular table of daily records. Transforms return new tables.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    columns: Vec<ColumnSpec>,
    rows: Vec<Row>,
    provenance: Vec<StageRecord>,
}

impl FeatureTable {
    /// Builds a table and rejects it if any invariant is broken.
    pub fn new(columns: Vec<ColumnSpec>, rows: Vec<Row>) -> Result<Self> {
        let table = Self::new_unchecked(columns, rows);
        match validate_table(&table).into_iter().next() {
            None => Ok(table),
            Some(v) => Err(ForgeError::Config(format!("invalid table: {v}"))),
        }
    }

    /// Builds a table without checking invariants; use [`validate_table`] on it.
    pub fn new_unchecked(columns: Vec<ColumnSpec>, rows: Vec<Row>) -> Self {
        FeatureTable {
            columns,
            rows,
            provenance: Vec::new(),
        }
    }

    pub fn empty(columns: Vec<ColumnSpec>) -> Self {
        Self::new_unchecked(columns, Vec::new())
    }

    /// Data columns, keys excluded.
    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn provenance(&self) -> &[StageRecord] {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: Vec<StageRecord>) -> Self {
        self.provenance = provenance;
        self
    }

    pub(crate) fn stamp(mut self, record: StageRecord) -> Self {
        self.provenance.push(record);
        self
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Column count including the two key columns.
    pub fn n_columns(&self) -> usize {
        self.columns.len() + 2
    }

    pub fn n_data_columns(&self) -> usize {
        self.columns.len()
    }

    /// Full column list with the key columns first, as written to CSV.
    pub fn column_specs(&self) -> Vec<ColumnSpec> {
        let key_modality = self
            .columns
            .first()
            .map(|c| c.modality)
            .unwrap_or(Modality::GroundTruth);
        let mut specs = vec![
            ColumnSpec::new(PARTICIPANT_COLUMN, key_modality, ColumnKind::Key),
            ColumnSpec::new(DATE_COLUMN, key_modality, ColumnKind::Key),
        ];
        specs.extend(self.columns.iter().cloned());
        specs
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn target_index(&self) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.kind == ColumnKind::Target)
            .ok_or(ForgeError::NoTarget)
    }

    pub fn column_values(&self, column: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.rows.iter().map(move |r| r.get(column))
    }

    /// Distinct participant ids in first-seen order.
    pub fn participants(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.rows
            .iter()
            .map(|r| r.key.participant_id.as_str())
            .filter(|p| seen.insert(*p))
            .collect()
    }

    /// Row indices grouped per participant, participants in first-seen order.
    pub fn rows_by_participant(&self) -> Vec<(String, Vec<usize>)> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            let p = row.key.participant_id.as_str();
            groups
                .entry(p)
                .or_insert_with(|| {
                    order.push(p.to_string());
                    Vec::new()
                })
                .push(i);
        }
        order
            .into_iter()
            .map(|p| {
                let idx = groups.remove(p.as_str()).unwrap_or_default();
                (p, idx)
            })
            .collect()
    }

    pub fn missing_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.missing.iter().filter(|m| **m).count())
            .sum()
    }

    /// Keeps the listed data columns in the given order.
    pub fn select_columns(&self, keep: &[usize]) -> FeatureTable {
        FeatureTable {
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            rows: self.rows.iter().map(|r| r.select(keep)).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn filter_rows(&self, mut keep: impl FnMut(usize, &Row) -> bool) -> FeatureTable {
        FeatureTable {
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .enumerate()
                .filter(|(i, r)| keep(*i, r))
                .map(|(_, r)| r.clone())
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub(crate) fn with_rows(&self, rows: Vec<Row>) -> FeatureTable {
        FeatureTable {
            columns: self.columns.clone(),
            rows,
            provenance: self.provenance.clone(),
        }
    }

    pub(crate) fn with_columns(mut self, columns: Vec<ColumnSpec>) -> FeatureTable {
        debug_assert_eq!(columns.len(), self.columns.len());
        self.columns = columns;
        self
    }

    pub fn rename_column(mut self, column: usize, name: impl Into<String>) -> FeatureTable {
        self.columns[column].name = name.into();
        self
    }
}

/// A broken table invariant, located by row and/or column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    DuplicateKey {
        row: usize,
        participant_id: String,
        date: NaiveDate,
    },
    ArityMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    DuplicateColumn {
        column: String,
    },
    KeyInData {
        column: String,
    },
    MultipleTargets {
        columns: Vec<String>,
    },
    NonFiniteValue {
        row: usize,
        column: String,
    },
    EmptyParticipant {
        row: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateKey {
                row,
                participant_id,
                date,
            } => write!(f, "duplicate key ({participant_id}, {date}) at row {row}"),
            Violation::ArityMismatch {
                row,
                expected,
                found,
            } => write!(f, "arity mismatch at row {row}: {found} cells, expected {expected}"),
            Violation::DuplicateColumn { column } => write!(f, "duplicate column `{column}`"),
            Violation::KeyInData { column } => {
                write!(f, "key column `{column}` stored as a data column")
            }
            Violation::MultipleTargets { columns } => {
                write!(f, "more than one target column: {}", columns.join(", "))
            }
            Violation::NonFiniteValue { row, column } => {
                write!(f, "non-finite value at row {row}, column `{column}`")
            }
            Violation::EmptyParticipant { row } => write!(f, "empty participant id at row {row}"),
        }
    }
}

/// Lists every broken invariant; an empty list means the table is well formed.
pub fn validate_table(table: &FeatureTable) -> Vec<Violation> {
    let mut violations = Vec::new();

    let mut names = HashSet::new();
    for spec in &table.columns {
        if !names.insert(spec.name.as_str()) {
            violations.push(Violation::DuplicateColumn {
                column: spec.name.clone(),
            });
        }
        if spec.kind == ColumnKind::Key
            || spec.name == PARTICIPANT_COLUMN
            || spec.name == DATE_COLUMN
        {
            violations.push(Violation::KeyInData {
                column: spec.name.clone(),
            });
        }
    }
    let targets: Vec<String> = table
        .columns
        .iter()
        .filter(|c| c.kind == ColumnKind::Target)
        .map(|c| c.name.clone())
        .collect();
    if targets.len() > 1 {
        violations.push(Violation::MultipleTargets { columns: targets });
    }

    let width = table.columns.len();
    let mut keys = HashSet::new();
    for (i, row) in table.rows.iter().enumerate() {
        if row.key.participant_id.is_empty() {
            violations.push(Violation::EmptyParticipant { row: i });
        }
        if !keys.insert(&row.key) {
            violations.push(Violation::DuplicateKey {
                row: i,
                participant_id: row.key.participant_id.clone(),
                date: row.key.date,
            });
        }
        if row.values.len() != width || row.missing.len() != width {
            violations.push(Violation::ArityMismatch {
                row: i,
                expected: width,
                found: row.values.len(),
            });
            continue;
        }
        for (j, (v, m)) in row.values.iter().zip(&row.missing).enumerate() {
            if !m && !v.is_finite() {
                violations.push(Violation::NonFiniteValue {
                    row: i,
                    column: table.columns[j].name.clone(),
                });
            }
        }
    }
    violations
}

/// Dense numeric view handed to the learning stages: complete features plus
/// integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub modalities: Vec<Modality>,
    pub features: Array2<f64>,
    pub labels: Vec<u32>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        modalities: Vec<Modality>,
        features: Array2<f64>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if feature_names.len() != features.ncols() || modalities.len() != features.ncols() {
            return Err(ForgeError::Arity {
                expected: features.ncols(),
                found: feature_names.len(),
            });
        }
        if labels.len() != features.nrows() {
            return Err(ForgeError::LengthMismatch {
                left: labels.len(),
                right: features.nrows(),
            });
        }
        Ok(Dataset {
            feature_names,
            modalities,
            features,
            labels,
        })
    }

    /// Converts a preprocessed table: every non-target column becomes a
    /// feature, the target becomes the label.
    pub fn from_table(table: &FeatureTable) -> Result<Self> {
        let target = table.target_index()?;
        let feature_cols: Vec<usize> = (0..table.n_data_columns())
            .filter(|&j| j != target)
            .collect();
        let mut features = Array2::zeros((table.n_rows(), feature_cols.len()));
        let mut labels = Vec::with_capacity(table.n_rows());
        for (i, row) in table.rows().iter().enumerate() {
            for (out, &j) in feature_cols.iter().enumerate() {
                features[[i, out]] = row
                    .get(j)
                    .ok_or(ForgeError::NonFinite { row: i, column: out })?;
            }
            let raw = row.get(target).unwrap_or(f64::NAN);
            let label = StressLabel::from_value(raw)
                .ok_or(ForgeError::InvalidLabel { row: i, value: raw })?;
            labels.push(label.class() as u32);
        }
        Ok(Dataset {
            feature_names: feature_cols
                .iter()
                .map(|&j| table.columns()[j].name.clone())
                .collect(),
            modalities: feature_cols
                .iter()
                .map(|&j| table.columns()[j].modality)
                .collect(),
            features,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            modalities: self.modalities.clone(),
            features: self.features.select(ndarray::Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn select_features(&self, columns: &[usize]) -> Dataset {
        Dataset {
            feature_names: columns.iter().map(|&j| self.feature_names[j].clone()).collect(),
            modalities: columns.iter().map(|&j| self.modalities[j]).collect(),
            features: self.features.select(ndarray::Axis(1), columns),
            labels: self.labels.clone(),
        }
    }

    /// Feature name to modality lookup.
    pub fn tags(&self) -> BTreeMap<String, Modality> {
        self.feature_names
            .iter()
            .cloned()
            .zip(self.modalities.iter().copied())
            .collect()
    }

    /// (class, count) pairs in ascending class order.
    pub fn class_counts(&self) -> Vec<(u32, usize)> {
        class_counts(&self.labels)
    }
}

pub fn class_counts(labels: &[u32]) -> Vec<(u32, usize)> {
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    counts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2018, 3, d).unwrap()
    }

    fn small_table() -> FeatureTable {
        let columns = vec![
            ColumnSpec::feature("sleep_duration", Modality::Sleep),
            ColumnSpec::new("stress", Modality::GroundTruth, ColumnKind::Target),
        ];
        let rows = vec![
            Row::from_cells(RecordKey::new("p1", day(1)), [Some(7.5), Some(2.0)]),
            Row::from_cells(RecordKey::new("p1", day(2)), [None, Some(3.0)]),
            Row::from_cells(RecordKey::new("p2", day(1)), [Some(6.0), Some(1.0)]),
        ];
        FeatureTable::new_unchecked(columns, rows)
    }

    #[test]
    fn well_formed_table_has_no_violations() {
        assert!(validate_table(&small_table()).is_empty());
    }

    #[test]
    fn duplicate_key_is_reported_once() {
        let t = small_table();
        let mut rows = t.rows().to_vec();
        rows[2].key = rows[0].key.clone();
        let v = validate_table(&t.with_rows(rows));
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::DuplicateKey { row: 2, .. }));
    }

    #[test]
    fn short_row_is_an_arity_violation() {
        let t = small_table();
        let mut rows = t.rows().to_vec();
        rows[1] = Row::from_cells(RecordKey::new("p1", day(2)), [Some(1.0)]);
        let v = validate_table(&t.with_rows(rows));
        assert_eq!(
            v,
            vec![Violation::ArityMismatch {
                row: 1,
                expected: 2,
                found: 1
            }]
        );
    }

    #[test]
    fn nan_is_not_a_missing_marker() {
        let t = small_table();
        let mut rows = t.rows().to_vec();
        rows[0].set(0, Some(f64::NAN));
        let v = validate_table(&t.with_rows(rows));
        assert!(matches!(v.as_slice(), [Violation::NonFiniteValue { row: 0, .. }]));
    }

    #[test]
    fn counts_include_keys() {
        let t = small_table();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_columns(), 4);
        assert_eq!(t.n_data_columns(), 2);
        assert_eq!(t.missing_count(), 1);
        assert_eq!(t.participants(), vec!["p1", "p2"]);
    }

    #[test]
    fn stress_label_accepts_only_integers_in_range() {
        assert_eq!(StressLabel::from_value(3.0).map(|l| l.class()), Some(3));
        assert!(StressLabel::from_value(0.0).is_none());
        assert!(StressLabel::from_value(6.0).is_none());
        assert!(StressLabel::from_value(2.5).is_none());
    }

    #[test]
    fn dataset_from_table_rejects_missing_features() {
        let err = Dataset::from_table(&small_table()).unwrap_err();
        assert!(matches!(err, ForgeError::NonFinite { row: 1, column: 0 }));
    }

    #[test]
    fn modality_round_trips_through_str() {
        for m in Modality::ALL {
            assert_eq!(m.as_str().parse::<Modality>().unwrap(), m);
        }
    }
}
