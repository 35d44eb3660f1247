//! End-to-end experiment runs and their output bundles.
//!
//! A run goes ingest, preprocess, SMOTE (before the split, when configured),
//! split, SMOTE on the training part (after the split, when configured),
//! train, rank, optional top-k retrain, evaluate. Every output file is
//! written in a fixed order with fixed formatting, so two runs with the same
//! inputs and seed produce identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{scenario_matrix, PipelineConfig};
use crate::dataset::{Dataset, Modality, Stage, StageRecord};
use crate::error::{ForgeError, Result};
use crate::evaluate::{compare_reports, metrics, split_indices, EvaluationReport, ReportDelta};
use crate::forest::train_forest;
use crate::ingest::{ingest_manifest, Ingested, MergeReport};
use crate::plot;
use crate::preprocess::preprocess;
use crate::ranking::{modality_scores, select_features, top_k_features, ModalityScore, RankedFeature};
use crate::resample::{smote_dataset, Placement};

/// Five-number summary of one feature within one stress class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub feature: String,
    pub class: u32,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub name: String,
    pub config: PipelineConfig,
    pub merge: MergeReport,
    pub provenance: Vec<StageRecord>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_synthetic: usize,
    /// Importances of every feature of the full model, in column order.
    pub importances: Vec<(String, f64)>,
    pub ranking: Vec<RankedFeature>,
    pub modality_scores: Vec<ModalityScore>,
    /// Modality of every feature after preprocessing.
    pub tags: BTreeMap<String, Modality>,
    /// Features the evaluated model was trained on.
    pub model_features: Vec<String>,
    pub report: EvaluationReport,
    pub feature_box: Vec<BoxStats>,
}

fn dataset_record(stage: Stage, rule: String, before: &Dataset, after: &Dataset) -> StageRecord {
    let mut r = StageRecord::new(stage, rule);
    r.rows_before = before.n_rows();
    r.rows_after = after.n_rows();
    r.columns_before = before.n_features() + 3;
    r.columns_after = after.n_features() + 3;
    r
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn box_stats(data: &Dataset, features: &[usize]) -> Vec<BoxStats> {
    let classes: Vec<u32> = data.class_counts().into_iter().map(|(c, _)| c).collect();
    let mut out = Vec::new();
    for &j in features {
        for &class in &classes {
            let mut v: Vec<f64> = (0..data.n_rows())
                .filter(|&i| data.labels[i] == class)
                .map(|i| data.features[[i, j]])
                .collect();
            v.sort_by(f64::total_cmp);
            out.push(BoxStats {
                feature: data.feature_names[j].clone(),
                class,
                n: v.len(),
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
            });
        }
    }
    out
}

/// Runs one configuration on an already merged table.
pub fn run_on_table(config: &PipelineConfig, ingested: &Ingested) -> Result<Experiment> {
    config.validate()?;
    let (table, data) = preprocess(&ingested.table, config.variant, &config.sparse)
        .map_err(|e| e.in_stage("preprocess"))?;
    let mut provenance: Vec<StageRecord> = table.provenance().to_vec();
    let smote = config.smote_params();
    let mut n_synthetic = 0;

    let mut working = data.clone();
    if let (Some(params), Placement::BeforeSplit) = (&smote, config.smote_placement) {
        let (balanced, origins) = smote_dataset(&working, params).map_err(|e| e.in_stage("balance"))?;
        provenance.push(dataset_record(
            Stage::Balance,
            format!("smote k={} on all rows before the split", params.k),
            &working,
            &balanced,
        ));
        n_synthetic = origins.len();
        working = balanced;
    }

    let split = split_indices(&working.labels, config.test_fraction, config.seed, config.stratified())
        .map_err(|e| e.in_stage("split"))?;
    let mut train = working.subset(&split.train);
    let test = working.subset(&split.test);
    let mut record = dataset_record(
        Stage::Split,
        format!(
            "holdout {} test rows ({}), {} train rows kept",
            split.test.len(),
            if config.stratified() { "stratified" } else { "shuffled" },
            split.train.len()
        ),
        &working,
        &train,
    );
    record.warnings = split.warnings.clone();
    provenance.push(record);

    if let (Some(params), Placement::AfterSplit) = (&smote, config.smote_placement) {
        let (balanced, origins) = smote_dataset(&train, params).map_err(|e| e.in_stage("balance"))?;
        provenance.push(dataset_record(
            Stage::Balance,
            format!("smote k={} on the training rows after the split", params.k),
            &train,
            &balanced,
        ));
        n_synthetic = origins.len();
        train = balanced;
    }
    let n_train = train.n_rows();

    let forest_params = config.forest_params();
    let forest = train_forest(train.features.view(), &train.labels, &forest_params)
        .map_err(|e| e.in_stage("train"))?;
    let importances = forest.importances().to_vec();
    let k = config.top_k.min(train.n_features());
    let ranking = top_k_features(&importances, &train.feature_names, k).map_err(|e| e.in_stage("rank"))?;
    let top_names: Vec<String> = ranking.iter().map(|r| r.name.clone()).collect();
    let scores = modality_scores(&top_names, &train.tags()).map_err(|e| e.in_stage("rank"))?;

    let (model, model_test, model_features) = match config.feature_select_k {
        Some(sel) if sel < train.n_features() => {
            let (reduced, keep) = select_features(&train, &importances, sel).map_err(|e| e.in_stage("select_features"))?;
            let mut r = dataset_record(
                Stage::SelectFeatures,
                format!("keep the {sel} most important features and retrain"),
                &train,
                &reduced,
            );
            r.dropped_columns = (0..train.n_features())
                .filter(|j| !keep.contains(j))
                .map(|j| train.feature_names[j].clone())
                .collect();
            provenance.push(r);
            let retrained = train_forest(reduced.features.view(), &reduced.labels, &forest_params)
                .map_err(|e| e.in_stage("train"))?;
            let names = reduced.feature_names.clone();
            (retrained, test.select_features(&keep), names)
        }
        _ => (forest, test.clone(), train.feature_names.clone()),
    };

    let predicted = model
        .predict(model_test.features.view())
        .map_err(|e| e.in_stage("evaluate"))?;
    let report = metrics(&model_test.labels, &predicted).map_err(|e| e.in_stage("evaluate"))?;

    let box_features: Vec<usize> = ranking.iter().take(5).map(|r| r.index).collect();
    Ok(Experiment {
        name: config.name(),
        config: config.clone(),
        merge: ingested.report.clone(),
        provenance,
        n_train,
        n_test: test.n_rows(),
        n_synthetic,
        importances: train
            .feature_names
            .iter()
            .cloned()
            .zip(importances.iter().copied())
            .collect(),
        ranking,
        modality_scores: scores,
        tags: data.tags(),
        model_features,
        report,
        feature_box: box_stats(&data, &box_features),
    })
}

/// Ingests a manifest and runs one configuration on it.
pub fn run_experiment(config: &PipelineConfig, manifest: &Path) -> Result<Experiment> {
    config.validate()?;
    let ingested = ingest_manifest(manifest).map_err(|e| e.in_stage("ingest"))?;
    run_on_table(config, &ingested)
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| ForgeError::io(path, e))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| ForgeError::json("<bundle>", e))
}

pub fn ranking_csv(ranking: &[RankedFeature], tags: &BTreeMap<String, Modality>) -> String {
    let mut out = String::from("rank,feature,modality,importance\n");
    for r in ranking {
        let modality = tags.get(&r.name).map_or("", |m| m.as_str());
        let _ = writeln!(out, "{},{},{},{}", r.rank, r.name, modality, r.importance);
    }
    out
}

pub fn modality_scores_csv(scores: &[ModalityScore]) -> String {
    let mut out = String::from("modality,score,features\n");
    for s in scores {
        let _ = writeln!(out, "{},{},{}", s.modality, s.score, s.features);
    }
    out
}

#[derive(Serialize)]
struct ProvenanceFile<'a> {
    scenario: &'a str,
    merge: &'a MergeReport,
    stages: &'a [StageRecord],
    n_train: usize,
    n_test: usize,
    n_synthetic: usize,
    model_features: usize,
}

impl Experiment {
    /// Writes the run's files into `dir` (created if needed).
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| ForgeError::io(dir, e))?;
        write(dir, "config.toml", self.config.to_toml()?)?;
        write(dir, "report.json", json(&self.report)?)?;
        write(dir, "report.txt", self.report.to_text())?;
        write(dir, "confusion.csv", self.report.confusion_csv())?;
        write(dir, "ranking.csv", ranking_csv(&self.ranking, &self.tags))?;
        let mut imp = String::from("feature,importance\n");
        for (name, v) in &self.importances {
            let _ = writeln!(imp, "{name},{v}");
        }
        write(dir, "importances.csv", imp)?;
        write(dir, "modality_scores.csv", modality_scores_csv(&self.modality_scores))?;
        let mut boxes = String::from("feature,class,n,min,q1,median,q3,max\n");
        for b in &self.feature_box {
            let _ = writeln!(
                boxes,
                "{},{},{},{},{},{},{},{}",
                b.feature, b.class, b.n, b.min, b.q1, b.median, b.q3, b.max
            );
        }
        write(dir, "feature_box.csv", boxes)?;
        write(dir, "merge_report.json", json(&self.merge)?)?;
        write(
            dir,
            "provenance.json",
            json(&ProvenanceFile {
                scenario: &self.name,
                merge: &self.merge,
                stages: &self.provenance,
                n_train: self.n_train,
                n_test: self.n_test,
                n_synthetic: self.n_synthetic,
                model_features: self.model_features.len(),
            })?,
        )?;
        if self.config.plots {
            let labels: Vec<String> = self.ranking.iter().map(|r| r.name.clone()).collect();
            let values: Vec<f64> = self.ranking.iter().map(|r| r.importance).collect();
            write(dir, "ranking.svg", plot::bar_chart("feature importance", &labels, &values))?;
            let labels: Vec<String> = self.modality_scores.iter().map(|s| s.modality.to_string()).collect();
            let values: Vec<f64> = self.modality_scores.iter().map(|s| s.score as f64).collect();
            write(dir, "modality_scores.svg", plot::bar_chart("modality score", &labels, &values))?;
            let classes: Vec<String> = self.report.per_class.iter().map(|m| m.class.to_string()).collect();
            write(
                dir,
                "confusion.svg",
                plot::heatmap("confusion (% of test rows)", &classes, &self.report.confusion_percent),
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub runs: Vec<Experiment>,
}

impl MatrixResult {
    pub fn run(&self, name: &str) -> Option<&Experiment> {
        self.runs.iter().find(|r| r.name == name)
    }

    /// Scenario table ordered by accuracy, lowest first.
    pub fn comparison_csv(&self) -> String {
        let mut order: Vec<&Experiment> = self.runs.iter().collect();
        order.sort_by(|a, b| {
            a.report
                .accuracy
                .total_cmp(&b.report.accuracy)
                .then_with(|| a.name.cmp(&b.name))
        });
        let classes: BTreeSet<u32> = self.runs.iter().flat_map(|r| r.report.classes()).collect();
        let mut out = String::from("scenario,accuracy,macro_f1,weighted_f1");
        for c in &classes {
            let _ = write!(out, ",f1_class_{c}");
        }
        out.push('\n');
        for r in order {
            let _ = write!(
                out,
                "{},{},{},{}",
                r.name, r.report.accuracy, r.report.macro_avg.f1, r.report.weighted_avg.f1
            );
            for c in &classes {
                let f1 = r.report.class(*c).map_or(0.0, |m| m.f1);
                let _ = write!(out, ",{f1}");
            }
            out.push('\n');
        }
        out
    }

    /// Imbalanced to SMOTE change for each variant.
    pub fn smote_deltas(&self) -> Result<Vec<(String, ReportDelta)>> {
        let mut out = Vec::new();
        for variant in ["without_personality", "with_personality"] {
            let a = self.run(&format!("{variant}-imbalanced"));
            let b = self.run(&format!("{variant}-smote"));
            if let (Some(a), Some(b)) = (a, b) {
                out.push((variant.to_string(), compare_reports(&a.report, &b.report)?));
            }
        }
        Ok(out)
    }
}

/// Runs the four scenarios of `base` on one ingested table.
pub fn run_matrix_on_table(base: &PipelineConfig, ingested: &Ingested) -> Result<MatrixResult> {
    let runs = scenario_matrix(base)
        .iter()
        .map(|c| run_on_table(c, ingested))
        .collect::<Result<Vec<_>>>()?;
    Ok(MatrixResult { runs })
}

/// Ingests once, runs the four scenarios, and when `out` is given writes one
/// bundle per scenario plus `comparison.csv` and `smote_deltas.txt`.
pub fn run_matrix(base: &PipelineConfig, manifest: &Path, out: Option<&Path>) -> Result<MatrixResult> {
    base.validate()?;
    let ingested = ingest_manifest(manifest).map_err(|e| e.in_stage("ingest"))?;
    let result = run_matrix_on_table(base, &ingested)?;
    if let Some(dir) = out {
        for run in &result.runs {
            run.write_bundle(&dir.join(&run.name))?;
        }
        write(dir, "comparison.csv", result.comparison_csv())?;
        let mut text = String::new();
        for (variant, delta) in result.smote_deltas()? {
            let _ = writeln!(text, "{variant}: imbalanced -> smote\n{}", delta.to_text());
        }
        write(dir, "smote_deltas.txt", text)?;
    }
    Ok(result)
}

/// Runs one configuration and writes its bundle. Returns the bundle path.
pub fn run_to_dir(config: &PipelineConfig, manifest: &Path, out: &Path) -> Result<(Experiment, PathBuf)> {
    config.validate()?;
    let ingested = ingest_manifest(manifest).map_err(|e| e.in_stage("ingest"))?;
    let experiment = run_on_table(config, &ingested)?;
    experiment.write_bundle(out)?;
    Ok((experiment, out.to_path_buf()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Resampling;
    use crate::preprocess::SparsePolicy;
    use crate::synthgen::{generate_to_dir, GeneratorSpec};

    fn small_data(dir: &Path) -> PathBuf {
        let spec = GeneratorSpec {
            participants: 16,
            survey_days: 12,
            class_prior: vec![4.0, 4.0, 3.0, 2.0, 2.0],
            ..GeneratorSpec::planted_benchmark()
        };
        generate_to_dir(&spec, 5, dir).unwrap()
    }

    fn small_config() -> PipelineConfig {
        let mut c = PipelineConfig::new(9);
        c.forest.n_estimators = 15;
        c.top_k = 5;
        c.sparse = SparsePolicy::Names { columns: Vec::new() };
        c
    }

    #[test]
    fn bundle_is_complete_and_byte_identical_across_runs() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_data(data.path());
        let out = tempfile::tempdir().unwrap();
        let mut config = small_config();
        config.plots = true;
        config.resampling = Resampling::smote(3);
        let (a, dir_a) = run_to_dir(&config, &manifest, &out.path().join("a")).unwrap();
        let (_, dir_b) = run_to_dir(&config, &manifest, &out.path().join("b")).unwrap();
        assert!(a.n_synthetic > 0);
        assert_eq!(a.ranking.len(), 5);
        let files = [
            "config.toml",
            "report.json",
            "report.txt",
            "confusion.csv",
            "ranking.csv",
            "importances.csv",
            "modality_scores.csv",
            "feature_box.csv",
            "merge_report.json",
            "provenance.json",
            "ranking.svg",
            "modality_scores.svg",
            "confusion.svg",
        ];
        for f in files {
            let x = fs::read(dir_a.join(f)).unwrap();
            let y = fs::read(dir_b.join(f)).unwrap();
            assert!(!x.is_empty(), "{f}");
            assert_eq!(x, y, "{f} differs between runs");
        }
        let saved = PipelineConfig::load(&dir_a.join("config.toml")).unwrap();
        assert_eq!(saved, config);
    }

    #[test]
    fn feature_selection_retrains_on_fewer_columns() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_data(data.path());
        let mut config = small_config();
        config.feature_select_k = Some(4);
        let run = run_experiment(&config, &manifest).unwrap();
        assert_eq!(run.model_features.len(), 4);
        let last = run.provenance.last().unwrap();
        assert_eq!(last.stage, Stage::SelectFeatures);
        assert_eq!(last.dropped_columns.len(), run.importances.len() - 4);
    }

    #[test]
    fn after_split_smote_leaves_test_rows_real() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_data(data.path());
        let mut before = small_config();
        before.resampling = Resampling::smote(3);
        let mut after = before.clone();
        after.smote_placement = Placement::AfterSplit;
        let b = run_experiment(&before, &manifest).unwrap();
        let a = run_experiment(&after, &manifest).unwrap();
        // Before the split the test set is drawn from the balanced pool.
        assert!(b.n_test > a.n_test);
        let split = |e: &Experiment| e.provenance.iter().find(|r| r.stage == Stage::Split).unwrap().rows_before;
        assert_eq!(a.n_test + a.n_train - a.n_synthetic, split(&a));
        assert_eq!(b.n_test + b.n_train, split(&b));
        assert!(a.provenance.iter().any(|r| r.stage == Stage::Balance));
    }

    #[test]
    fn matrix_writes_comparison() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_data(data.path());
        let out = tempfile::tempdir().unwrap();
        let result = run_matrix(&small_config(), &manifest, Some(out.path())).unwrap();
        assert_eq!(result.runs.len(), 4);
        let table = fs::read_to_string(out.path().join("comparison.csv")).unwrap();
        assert_eq!(table.lines().count(), 5);
        let acc: Vec<f64> = table
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(acc.windows(2).all(|w| w[0] <= w[1]));
        assert!(out.path().join("with_personality-smote/report.txt").exists());
        let classes: BTreeSet<u32> = result.runs.iter().flat_map(|r| r.report.classes()).collect();
        let header = table.lines().next().unwrap();
        assert_eq!(header.matches("f1_class_").count(), classes.len());
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let data = tempfile::tempdir().unwrap();
        let manifest = small_data(data.path());
        let mut config = small_config();
        config.resampling = Resampling::smote(500);
        let err = run_experiment(&config, &manifest).unwrap_err();
        assert!(err.to_string().contains("balance"), "{err}");
    }
}
