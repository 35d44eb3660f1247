//! Python bindings. Matrices are accepted as sequences of rows (lists or
//! 2-D numpy arrays) and returned as lists; structured results come back as
//! plain dicts.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use stressforge::config::PipelineConfig;
use stressforge::evaluate::{metrics, split_indices};
use stressforge::forest::{train_forest, ForestParams, MaxFeatures, TrainedForest};
use stressforge::ingest::ingest_manifest;
use stressforge::pipeline::{run_matrix, run_on_table, run_to_dir};
use stressforge::preprocess::{preprocess, SparsePolicy, Variant};
use stressforge::ranking::{modality_scores as score_modalities, top_k_features as rank_features};
use stressforge::resample::{smote_balance as balance, SmoteParams};
use stressforge::synthgen::{generate as synthesize, planted_truth as truth_of, GeneratorSpec, GroundTruthSidecar};
use stressforge::{ForgeError, Modality};

fn to_py(e: ForgeError) -> PyErr {
    match e {
        ForgeError::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("all rows must have the same length"));
    }
    Array2::from_shape_vec((n, p), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Converts any serializable value to Python through JSON.
fn to_python<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(|e: ForgeError| PyValueError::new_err(e.to_string()))
}

/// Writes a synthetic dataset (sources, manifest, truth sidecar) into
/// `out_dir` and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed, preset = "study", participants = None, days = None))]
fn generate(
    py: Python<'_>,
    out_dir: PathBuf,
    seed: u64,
    preset: &str,
    participants: Option<usize>,
    days: Option<usize>,
) -> PyResult<String> {
    let mut spec = match preset {
        "study" => GeneratorSpec::study(),
        "planted" => GeneratorSpec::planted_benchmark(),
        other => return Err(PyValueError::new_err(format!("unknown preset `{other}`"))),
    };
    if let Some(p) = participants {
        spec.participants = p;
    }
    if let Some(d) = days {
        spec.survey_days = d;
        spec.missing_target_count = spec.missing_target_count.min(spec.participants * d.saturating_sub(1));
    }
    let path = py.detach(|| synthesize(&spec, seed).and_then(|data| data.write_to_dir(&out_dir)));
    Ok(path.map_err(to_py)?.display().to_string())
}

/// Ingests a manifest and preprocesses it. Returns a dict with `features`,
/// `labels`, `feature_names`, `modalities` and `merge_report`.
#[pyfunction]
#[pyo3(signature = (manifest, variant_name = "without", min_coverage = None))]
fn load_dataset<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    variant_name: &str,
    min_coverage: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let v = variant(variant_name)?;
    let policy = match min_coverage {
        Some(f) => SparsePolicy::Coverage {
            min_participant_fraction: f,
        },
        None => SparsePolicy::default(),
    };
    let (data, report) = py
        .detach(|| {
            let ingested = ingest_manifest(&manifest)?;
            let (_, data) = preprocess(&ingested.table, v, &policy)?;
            Ok((data, ingested.report))
        })
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("features", rows(&data.features))?;
    out.set_item("labels", data.labels.clone())?;
    out.set_item("feature_names", data.feature_names.clone())?;
    out.set_item(
        "modalities",
        data.modalities.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
    )?;
    out.set_item("merge_report", to_python(py, &report)?)?;
    Ok(out)
}

/// Input rows first, then synthetic rows: returns (features, labels,
/// n_original).
#[pyfunction]
#[pyo3(signature = (features, labels, k = 5, seed = 0, target = None, standardize = false))]
fn smote_balance(
    py: Python<'_>,
    features: Vec<Vec<f64>>,
    labels: Vec<u32>,
    k: usize,
    seed: u64,
    target: Option<usize>,
    standardize: bool,
) -> PyResult<(Vec<Vec<f64>>, Vec<u32>, usize)> {
    let x = matrix(features)?;
    let params = SmoteParams {
        k,
        target_count: target,
        seed,
        standardize,
    };
    let out = py.detach(|| balance(x.view(), &labels, &params)).map_err(to_py)?;
    Ok((rows(&out.features), out.labels, out.n_original))
}

/// (train, test) row indices of a seeded holdout split.
#[pyfunction]
#[pyo3(signature = (labels, test_fraction = 0.2, seed = 0, stratified = false))]
fn train_test_split(
    labels: Vec<u32>,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let split = split_indices(&labels, test_fraction, seed, stratified).map_err(to_py)?;
    Ok((split.train, split.test))
}

/// Gini random forest classifier.
#[pyclass(module = "stressforge")]
struct RandomForest {
    params: ForestParams,
    model: Option<(TrainedForest, Vec<String>)>,
}

fn parse_max_features(value: &Bound<'_, PyAny>) -> PyResult<MaxFeatures> {
    if let Ok(n) = value.extract::<usize>() {
        return Ok(MaxFeatures::Fixed(n));
    }
    match value.extract::<String>()?.as_str() {
        "sqrt" => Ok(MaxFeatures::Sqrt),
        "all" => Ok(MaxFeatures::All),
        other => Err(PyValueError::new_err(format!(
            "max_features must be \"sqrt\", \"all\" or an integer, got `{other}`"
        ))),
    }
}

impl RandomForest {
    fn fitted(&self) -> PyResult<&(TrainedForest, Vec<String>)> {
        self.model
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("the forest has not been fitted"))
    }
}

#[pymethods]
impl RandomForest {
    #[new]
    #[pyo3(signature = (
        n_estimators = 1000,
        max_features = None,
        max_depth = None,
        min_samples_split = 2,
        min_samples_leaf = 1,
        bootstrap = true,
        seed = 0,
    ))]
    fn new(
        n_estimators: usize,
        max_features: Option<&Bound<'_, PyAny>>,
        max_depth: Option<usize>,
        min_samples_split: usize,
        min_samples_leaf: usize,
        bootstrap: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let params = ForestParams {
            n_estimators,
            max_features: max_features.map(parse_max_features).transpose()?.unwrap_or(MaxFeatures::Sqrt),
            max_depth,
            min_samples_split,
            min_samples_leaf,
            bootstrap,
            seed,
            ..ForestParams::default()
        };
        params.validate().map_err(to_py)?;
        Ok(RandomForest { params, model: None })
    }

    #[pyo3(signature = (features, labels, feature_names = None))]
    fn fit<'py>(
        mut slf: PyRefMut<'py, Self>,
        py: Python<'py>,
        features: Vec<Vec<f64>>,
        labels: Vec<u32>,
        feature_names: Option<Vec<String>>,
    ) -> PyResult<PyRefMut<'py, Self>> {
        let x = matrix(features)?;
        let names = feature_names.unwrap_or_else(|| (0..x.ncols()).map(|j| format!("f{j}")).collect());
        if names.len() != x.ncols() {
            return Err(PyValueError::new_err("feature_names must have one name per column"));
        }
        let params = slf.params.clone();
        let forest = py.detach(|| train_forest(x.view(), &labels, &params)).map_err(to_py)?;
        slf.model = Some((forest, names));
        Ok(slf)
    }

    fn predict(&self, py: Python<'_>, features: Vec<Vec<f64>>) -> PyResult<Vec<u32>> {
        let (forest, _) = self.fitted()?;
        let x = matrix(features)?;
        py.detach(|| forest.predict(x.view())).map_err(to_py)
    }

    /// Out-of-bag accuracy on the training data, or None without bootstrap.
    fn oob_score(&self, features: Vec<Vec<f64>>, labels: Vec<u32>) -> PyResult<Option<f64>> {
        let (forest, _) = self.fitted()?;
        let x = matrix(features)?;
        Ok(forest.oob_accuracy(x.view(), &labels))
    }

    #[getter]
    fn feature_importances_(&self) -> PyResult<Vec<f64>> {
        Ok(self.fitted()?.0.importances().to_vec())
    }

    #[getter]
    fn feature_names(&self) -> PyResult<Vec<String>> {
        Ok(self.fitted()?.1.clone())
    }

    #[getter]
    fn classes_(&self) -> PyResult<Vec<u32>> {
        Ok(self.fitted()?.0.classes().to_vec())
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let (forest, names) = self.fitted()?;
        forest.save(&path, names).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (forest, names) = TrainedForest::load(&path).map_err(to_py)?;
        Ok(RandomForest {
            params: forest.params().clone(),
            model: Some((forest, names)),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "RandomForest(n_estimators={}, seed={}, fitted={})",
            self.params.n_estimators,
            self.params.seed,
            self.model.is_some()
        )
    }
}

/// Per-class precision, recall, f1 and support plus accuracy, averages and
/// the confusion matrix, as a dict.
#[pyfunction]
fn classification_report<'py>(
    py: Python<'py>,
    y_true: Vec<u32>,
    y_pred: Vec<u32>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = metrics(&y_true, &y_pred).map_err(to_py)?;
    to_python(py, &report)
}

/// The same report rendered as a text table.
#[pyfunction]
fn classification_report_text(y_true: Vec<u32>, y_pred: Vec<u32>) -> PyResult<String> {
    Ok(metrics(&y_true, &y_pred).map_err(to_py)?.to_text())
}

/// [(rank, name, importance)] for the k most important features.
#[pyfunction]
fn top_k_features(importances: Vec<f64>, names: Vec<String>, k: usize) -> PyResult<Vec<(usize, String, f64)>> {
    Ok(rank_features(&importances, &names, k)
        .map_err(to_py)?
        .into_iter()
        .map(|r| (r.rank, r.name, r.importance))
        .collect())
}

/// [(modality, score)] from an ordered top-k list and a name-to-modality
/// mapping.
#[pyfunction]
fn modality_scores(top: Vec<String>, tags: BTreeMap<String, String>) -> PyResult<Vec<(String, u64)>> {
    let tags = tags
        .into_iter()
        .map(|(name, m)| Ok((name, m.parse::<Modality>().map_err(to_py)?)))
        .collect::<PyResult<BTreeMap<_, _>>>()?;
    Ok(score_modalities(&top, &tags)
        .map_err(to_py)?
        .into_iter()
        .map(|s| (s.modality.as_str().to_string(), s.score))
        .collect())
}

/// Runs one experiment from a TOML config; writes the bundle when `out_dir`
/// is given. Returns the experiment as a dict.
#[pyfunction]
#[pyo3(signature = (config, manifest, out_dir = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    manifest: PathBuf,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let config = PipelineConfig::from_toml(config).map_err(to_py)?;
    let experiment = py
        .detach(|| match &out_dir {
            Some(dir) => run_to_dir(&config, &manifest, dir).map(|(e, _)| e),
            None => ingest_manifest(&manifest).and_then(|i| run_on_table(&config, &i)),
        })
        .map_err(to_py)?;
    to_python(py, &experiment)
}

/// Runs the four-scenario matrix. Returns {"runs": [...], "comparison": csv}.
#[pyfunction]
#[pyo3(signature = (config, manifest, out_dir = None))]
fn scenario_matrix<'py>(
    py: Python<'py>,
    config: &str,
    manifest: PathBuf,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let config = PipelineConfig::from_toml(config).map_err(to_py)?;
    let result = py
        .detach(|| run_matrix(&config, &manifest, out_dir.as_deref()))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("runs", to_python(py, &result.runs)?)?;
    out.set_item("comparison", result.comparison_csv())?;
    Ok(out)
}

/// Planted informative columns, their modalities and a Monte Carlo
/// Bayes-optimal accuracy, read from a generator truth sidecar.
#[pyfunction]
fn planted_truth<'py>(py: Python<'py>, truth_path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let sidecar = GroundTruthSidecar::load(&truth_path).map_err(to_py)?;
    let truth = py.detach(|| truth_of(&sidecar));
    to_python(py, &truth)
}

#[pymodule(name = "stressforge")]
fn stressforge_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RandomForest>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(smote_balance, m)?)?;
    m.add_function(wrap_pyfunction!(train_test_split, m)?)?;
    m.add_function(wrap_pyfunction!(classification_report, m)?)?;
    m.add_function(wrap_pyfunction!(classification_report_text, m)?)?;
    m.add_function(wrap_pyfunction!(top_k_features, m)?)?;
    m.add_function(wrap_pyfunction!(modality_scores, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(planted_truth, m)?)?;
    Ok(())
}
