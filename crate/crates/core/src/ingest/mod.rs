//! Loading per-modality CSV sources and merging them into one daily table.

mod csvio;
mod manifest;
mod merge;

use std::path::Path;

use rayon::prelude::*;

pub use csvio::{
    load_dataset, load_source, parse_date, parse_timestamp_day, read_dataset, read_table,
    schema_path, write_dataset, write_source, write_table, TIMESTAMP_COLUMN,
};
pub use manifest::{Manifest, ManifestColumn, SourceSpec, MANIFEST_VERSION};
pub use merge::{merge_report, merge_sources, MergeReport};

use crate::dataset::{FeatureTable, Stage, DATE_COLUMN, PARTICIPANT_COLUMN};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Ingested {
    pub table: FeatureTable,
    pub report: MergeReport,
    /// (source, old name, new name) for disambiguated column names.
    pub renamed: Vec<(String, String, String)>,
}

/// Loads every source of a manifest (in parallel) and merges them.
pub fn ingest_manifest(manifest_path: &Path) -> Result<Ingested> {
    let manifest = Manifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    ingest(&manifest, dir)
}

pub fn ingest(manifest: &Manifest, dir: &Path) -> Result<Ingested> {
    let mut manifest = manifest.clone();
    let renamed = manifest.resolve_collisions();
    let tables = manifest
        .sources
        .par_iter()
        .map(|s| load_source(&manifest.source_path(dir, s), s))
        .collect::<Result<Vec<_>>>()?;
    let merged = merge_sources(&tables)?;
    let table = restate_merge_record(merged, &manifest, &renamed);
    let report = merge_report(&table);
    Ok(Ingested {
        table,
        report,
        renamed,
    })
}

/// Replaces the generic merge record with one that accounts for every
/// declared column of the manifest, redundant keys included.
fn restate_merge_record(
    table: FeatureTable,
    manifest: &Manifest,
    renamed: &[(String, String, String)],
) -> FeatureTable {
    let mut provenance = table.provenance().to_vec();
    if let Some(record) = provenance.iter_mut().rev().find(|r| r.stage == Stage::Merge) {
        let mut kept_participant = false;
        let mut kept_date = false;
        let mut dropped = Vec::new();
        let mut order: Vec<&SourceSpec> = manifest.sources.iter().collect();
        order.sort_by_key(|s| s.modality.order());
        for source in order {
            for key in source.key_columns() {
                let keep = match key.name.as_str() {
                    PARTICIPANT_COLUMN if !kept_participant => {
                        kept_participant = true;
                        true
                    }
                    DATE_COLUMN if !kept_date => {
                        kept_date = true;
                        true
                    }
                    _ => false,
                };
                if !keep {
                    dropped.push(format!("{}.{}", source.name, key.name));
                }
            }
        }
        record.columns_before = manifest.declared_columns();
        record.dropped_columns = dropped;
        record.warnings.extend(
            renamed
                .iter()
                .map(|(s, old, new)| format!("{s}: `{old}` renamed to `{new}`")),
        );
    }
    table.with_provenance(provenance)
}
