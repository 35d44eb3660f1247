use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, FeatureTable, Modality, RecordKey, Row, Stage, StageRecord};
use crate::error::{ForgeError, Result};

fn canonical_rank(table: &FeatureTable) -> (usize, String) {
    match table.columns().first() {
        Some(c) => (c.modality.order(), c.name.clone()),
        None => (Modality::ALL.len(), String::new()),
    }
}

/// Joins daily source tables on (participant, date).
///
/// The join is inner and anchored on the table that carries the target
/// column (the daily survey), so device days without a survey answer are
/// discarded. Output columns follow the canonical source order (weather first,
/// ground truth last) whatever order the inputs come in; output rows follow
/// the anchor's row order.
pub fn merge_sources(tables: &[FeatureTable]) -> Result<FeatureTable> {
    match tables {
        [] => return Err(ForgeError::Empty),
        [single] => return Ok(single.clone()),
        _ => {}
    }

    let mut ordered: Vec<&FeatureTable> = tables.iter().collect();
    ordered.sort_by_key(|t| canonical_rank(t));

    let mut names = HashSet::new();
    for t in &ordered {
        for c in t.columns() {
            if !names.insert(c.name.as_str()) {
                return Err(ForgeError::DuplicateColumn(c.name.clone()));
            }
        }
    }

    let anchor = ordered
        .iter()
        .position(|t| t.columns().iter().any(|c| c.kind == ColumnKind::Target))
        .unwrap_or(0);

    let lookups: Vec<HashMap<&RecordKey, usize>> = ordered
        .iter()
        .map(|t| t.rows().iter().enumerate().map(|(i, r)| (&r.key, i)).collect())
        .collect();

    let width: usize = ordered.iter().map(|t| t.n_data_columns()).sum();
    let mut rows = Vec::with_capacity(ordered[anchor].n_rows());
    let mut unmatched = Vec::new();
    let mut used: Vec<usize> = vec![0; ordered.len()];
    for anchor_row in ordered[anchor].rows() {
        let hits: Option<Vec<usize>> = lookups
            .iter()
            .map(|l| l.get(&anchor_row.key).copied())
            .collect();
        match hits {
            Some(hits) => {
                let mut row = Row::from_cells(anchor_row.key.clone(), std::iter::empty());
                for (t, &i) in hits.iter().enumerate() {
                    row.extend_from(&ordered[t].rows()[i]);
                    used[t] += 1;
                }
                debug_assert_eq!(row.len(), width);
                rows.push(row);
            }
            None => unmatched.push(anchor_row.key.clone()),
        }
    }

    let columns = ordered
        .iter()
        .flat_map(|t| t.columns().iter().cloned())
        .collect();
    let mut record = StageRecord::new(
        Stage::Merge,
        "inner join on (participant_id, date) anchored on the survey table; keys kept once",
    );
    record.rows_before = ordered[anchor].n_rows();
    record.rows_after = rows.len();
    record.columns_before = ordered.iter().map(|t| t.n_columns()).sum();
    record.columns_after = width + 2;
    record.dropped_columns = ordered
        .iter()
        .enumerate()
        .skip(1)
        .flat_map(|(i, _)| {
            [
                format!("source{i}.participant_id"),
                format!("source{i}.date"),
            ]
        })
        .collect();
    record.dropped_rows = unmatched;
    for (t, table) in ordered.iter().enumerate() {
        let skipped = table.n_rows() - used[t];
        if t != anchor && skipped > 0 {
            let first = table.columns().first().map(|c| c.name.as_str()).unwrap_or("?");
            record.warnings.push(format!(
                "source starting with `{first}`: {skipped} rows without a survey answer were not joined"
            ));
        }
    }
    Ok(FeatureTable::new_unchecked(columns, rows).stamp(record))
}

/// Row/column accounting of a merged table, compared against the row count
/// full survey coverage would give.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeReport {
    pub rows: usize,
    pub columns: usize,
    pub data_columns: usize,
    pub participants: usize,
    pub survey_days: usize,
    pub hypothetical_rows: usize,
    pub coverage: f64,
}

pub fn merge_report(merged: &FeatureTable) -> MergeReport {
    let participants = merged.participants().len();
    let days: BTreeSet<_> = merged.rows().iter().map(|r| r.key.date).collect();
    let hypothetical = participants * days.len();
    MergeReport {
        rows: merged.n_rows(),
        columns: merged.n_columns(),
        data_columns: merged.n_data_columns(),
        participants,
        survey_days: days.len(),
        hypothetical_rows: hypothetical,
        coverage: if hypothetical == 0 {
            0.0
        } else {
            merged.n_rows() as f64 / hypothetical as f64
        },
    }
}
