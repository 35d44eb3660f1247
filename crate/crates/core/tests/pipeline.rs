//! End-to-end properties of experiment runs on generated data.

use std::collections::BTreeSet;

use stressforge::config::{PipelineConfig, Resampling};
use stressforge::ingest::ingest;
use stressforge::pipeline::run_on_table;
use stressforge::synthgen::{generate, GeneratorSpec};
use stressforge::{RecordKey, Stage};

fn config(seed: u64) -> PipelineConfig {
    let mut c = PipelineConfig::new(seed);
    c.forest.n_estimators = 60;
    c
}

#[test]
fn provenance_accounts_for_every_column_and_row() {
    let spec = GeneratorSpec {
        participants: 30,
        survey_days: 20,
        class_prior: vec![4.0, 4.0, 3.0, 2.0, 1.0],
        ..GeneratorSpec::study()
    };
    let data = generate(&spec, 11).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.write_to_dir(dir.path()).unwrap();
    let ingested = ingest(&data.manifest, dir.path()).unwrap();
    let mut c = config(11);
    c.resampling = Resampling::smote(3);
    let run = run_on_table(&c, &ingested).unwrap();

    // Columns: every declared column is either kept or dropped by exactly one
    // rule.
    let dropped: Vec<&String> = run.provenance.iter().flat_map(|r| &r.dropped_columns).collect();
    let unique: BTreeSet<&String> = dropped.iter().copied().collect();
    assert_eq!(unique.len(), dropped.len(), "a column is dropped by two rules");
    let kept = run.importances.len() + 1 + 2;
    assert_eq!(data.manifest.declared_columns(), kept + dropped.len());
    for r in &run.provenance {
        assert_eq!(r.columns_before - r.columns_after, r.dropped_columns.len(), "{:?}", r.stage);
    }

    // Rows: surveyed rows minus blank targets reach the model; each row
    // removed before the split is listed once.
    let dropped_rows: Vec<&RecordKey> = run.provenance.iter().flat_map(|r| &r.dropped_rows).collect();
    let unique_rows: BTreeSet<&RecordKey> = dropped_rows.iter().copied().collect();
    assert_eq!(unique_rows.len(), dropped_rows.len());
    let blank: BTreeSet<&RecordKey> = data.truth.missing_targets.iter().collect();
    assert_eq!(unique_rows, blank);
    let modelled = data.truth.rows.len() - data.truth.missing_targets.len();
    let split = run.provenance.iter().find(|r| r.stage == Stage::Split).unwrap();
    assert_eq!(split.rows_before, modelled + run.n_synthetic);
    assert_eq!(run.n_train + run.n_test, modelled + run.n_synthetic);
}

#[test]
fn retraining_on_selected_features_keeps_accuracy() {
    let data = generate(&GeneratorSpec::planted_benchmark(), 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    data.write_to_dir(dir.path()).unwrap();
    let ingested = ingest(&data.manifest, dir.path()).unwrap();
    let full = run_on_table(&config(12), &ingested).unwrap();
    let mut reduced_config = config(12);
    reduced_config.feature_select_k = Some(25);
    let reduced = run_on_table(&reduced_config, &ingested).unwrap();
    assert_eq!(reduced.model_features.len(), 25);
    let change = (reduced.report.accuracy - full.report.accuracy).abs();
    assert!(change <= 0.05, "full {} reduced {}", full.report.accuracy, reduced.report.accuracy);
}
