//! Random forest classifier with Gini splits and impurity importances.

mod split;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use split::{best_split, SplitCandidate};
pub use tree::{DecisionTree, Node};

use crate::error::{ForgeError, Result};
use tree::{argmax, GrowParams};

pub const MODEL_FORMAT: &str = "stressforge-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Gini,
}

/// Number of features drawn as split candidates at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "MaxFeaturesRepr", into = "MaxFeaturesRepr")]
pub enum MaxFeatures {
    /// `ceil(sqrt(p))`
    #[default]
    Sqrt,
    All,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MaxFeaturesRepr {
    Count(usize),
    Name(String),
}

impl TryFrom<MaxFeaturesRepr> for MaxFeatures {
    type Error = String;

    fn try_from(r: MaxFeaturesRepr) -> Result<Self, String> {
        match r {
            MaxFeaturesRepr::Count(0) => Err("max_features must be at least 1".into()),
            MaxFeaturesRepr::Count(m) => Ok(MaxFeatures::Fixed(m)),
            MaxFeaturesRepr::Name(s) => s.parse(),
        }
    }
}

impl From<MaxFeatures> for MaxFeaturesRepr {
    fn from(m: MaxFeatures) -> Self {
        match m {
            MaxFeatures::Fixed(m) => MaxFeaturesRepr::Count(m),
            other => MaxFeaturesRepr::Name(other.to_string()),
        }
    }
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let m = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Fixed(m) => m,
        };
        m.clamp(1, n_features.max(1))
    }
}

impl fmt::Display for MaxFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxFeatures::Sqrt => f.write_str("sqrt"),
            MaxFeatures::All => f.write_str("all"),
            MaxFeatures::Fixed(m) => write!(f, "{m}"),
        }
    }
}

impl FromStr for MaxFeatures {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sqrt" => Ok(MaxFeatures::Sqrt),
            "all" => Ok(MaxFeatures::All),
            other => match other.parse::<usize>() {
                Ok(0) => Err("max_features must be at least 1".into()),
                Ok(m) => Ok(MaxFeatures::Fixed(m)),
                Err(_) => Err(format!("max_features must be sqrt, all or a count, got `{other}`")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 1000,
            criterion: Criterion::Gini,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(ForgeError::Config(m.to_string()));
        if self.n_estimators == 0 {
            return fail("n_estimators must be at least 1");
        }
        if self.min_samples_split < 2 {
            return fail("min_samples_split must be at least 2");
        }
        if self.min_samples_leaf == 0 {
            return fail("min_samples_leaf must be at least 1");
        }
        if self.max_features == MaxFeatures::Fixed(0) {
            return fail("max_features must be at least 1");
        }
        Ok(())
    }
}

/// Rows left out of one tree's bootstrap sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OobSet {
    n: usize,
    bits: Vec<u64>,
}

impl OobSet {
    fn from_bag(n: usize, bag: &[usize]) -> Self {
        let mut bits = vec![u64::MAX; n.div_ceil(64)];
        if let Some(last) = bits.last_mut() {
            if n % 64 != 0 {
                *last = (1u64 << (n % 64)) - 1;
            }
        }
        for &i in bag {
            bits[i / 64] &= !(1u64 << (i % 64));
        }
        OobSet { n, bits }
    }

    pub fn contains(&self, row: usize) -> bool {
        row < self.n && self.bits[row / 64] >> (row % 64) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.contains(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedForest {
    params: ForestParams,
    classes: Vec<u32>,
    n_features: usize,
    trees: Vec<DecisionTree>,
    importances: Vec<f64>,
    oob: Vec<OobSet>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    params: ForestParams,
    classes: Vec<u32>,
    n_features: usize,
    #[serde(default)]
    feature_names: Vec<String>,
    trees: Vec<DecisionTree>,
}

fn check_features(features: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, column), v) in features.indexed_iter() {
        if !v.is_finite() {
            return Err(ForgeError::NonFinite { row, column });
        }
    }
    Ok(())
}

/// Fits `params.n_estimators` trees in parallel.
///
/// Tree `t` draws its bootstrap sample and candidate features from a ChaCha8
/// stream seeded with `params.seed` on stream `t`, so the result does not
/// depend on thread scheduling.
pub fn train_forest(
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    params: &ForestParams,
) -> Result<TrainedForest> {
    params.validate()?;
    let n = features.nrows();
    if labels.len() != n {
        return Err(ForgeError::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    if n == 0 || features.ncols() == 0 {
        return Err(ForgeError::Empty);
    }
    check_features(features)?;
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ForgeError::TooFewClasses(classes.len()));
    }
    let y: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label in class list"))
        .collect();
    let p = features.ncols();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| features.column(j).to_vec()).collect();
    let grow = GrowParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: params.max_features.resolve(p),
    };

    let fitted: Vec<(DecisionTree, OobSet)> = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let bag: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let oob = OobSet::from_bag(n, &bag);
            let tree = DecisionTree::grow(
                columns.as_slice(),
                &y,
                bag,
                p,
                classes.len(),
                grow,
                &mut rng,
            );
            (tree, oob)
        })
        .collect();
    let (trees, oob): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let importances = forest_importances(&trees, p);
    Ok(TrainedForest {
        params: params.clone(),
        classes,
        n_features: p,
        trees,
        importances,
        oob,
    })
}

/// Per-tree normalized impurity decrease, averaged and renormalized.
fn forest_importances(trees: &[DecisionTree], p: usize) -> Vec<f64> {
    let mut total = vec![0.0; p];
    let mut contributing = 0usize;
    for tree in trees {
        let raw = tree.raw_importances();
        let sum: f64 = raw.iter().sum();
        if sum > 0.0 {
            contributing += 1;
            for (t, r) in total.iter_mut().zip(&raw) {
                *t += r / sum;
            }
        }
    }
    let sum: f64 = total.iter().sum();
    if contributing == 0 || sum <= 0.0 {
        return vec![1.0 / p as f64; p];
    }
    total.iter().map(|t| t / sum).collect()
}

impl TrainedForest {
    /// Assembles a forest from existing trees. Trees must index classes in
    /// the order of `classes`.
    pub fn from_trees(
        params: ForestParams,
        classes: Vec<u32>,
        n_features: usize,
        trees: Vec<DecisionTree>,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(ForgeError::Empty);
        }
        for tree in &trees {
            if tree.n_features() != n_features {
                return Err(ForgeError::Arity {
                    expected: n_features,
                    found: tree.n_features(),
                });
            }
            if tree.n_classes() != classes.len() {
                return Err(ForgeError::Config(format!(
                    "tree has {} classes, forest has {}",
                    tree.n_classes(),
                    classes.len()
                )));
            }
            tree.check()?;
        }
        let importances = forest_importances(&trees, n_features);
        Ok(TrainedForest {
            params,
            classes,
            n_features,
            trees,
            importances,
            oob: Vec::new(),
        })
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Normalized mean decrease in impurity; sums to 1.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    /// Out-of-bag rows per tree. Empty for forests loaded from disk.
    pub fn oob_sets(&self) -> &[OobSet] {
        &self.oob
    }

    fn vote(&self, row: &[f64]) -> u32 {
        let mut votes = vec![0u32; self.classes.len()];
        for tree in &self.trees {
            votes[tree.predict_row(row)] += 1;
        }
        self.classes[argmax(&votes)]
    }

    /// Majority vote over trees; ties go to the lower class label.
    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<u32>> {
        if features.ncols() != self.n_features {
            return Err(ForgeError::Arity {
                expected: self.n_features,
                found: features.ncols(),
            });
        }
        Ok((0..features.nrows())
            .into_par_iter()
            .map(|i| {
                let row = features.row(i).to_vec();
                self.vote(&row)
            })
            .collect())
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<u32> {
        if row.len() != self.n_features {
            return Err(ForgeError::Arity {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(self.vote(row))
    }

    /// Accuracy of each row's vote among the trees that did not see it.
    /// Rows that were in every bag are skipped; `None` if no row qualifies.
    pub fn oob_accuracy(&self, features: ArrayView2<'_, f64>, labels: &[u32]) -> Option<f64> {
        if self.oob.is_empty() || features.nrows() != labels.len() {
            return None;
        }
        let (mut hit, mut seen) = (0usize, 0usize);
        for (i, &label) in labels.iter().enumerate() {
            let row = features.row(i).to_vec();
            let mut votes = vec![0u32; self.classes.len()];
            for (tree, oob) in self.trees.iter().zip(&self.oob) {
                if oob.contains(i) {
                    votes[tree.predict_row(&row)] += 1;
                }
            }
            if votes.iter().any(|&v| v > 0) {
                seen += 1;
                hit += usize::from(self.classes[argmax(&votes)] == label);
            }
        }
        (seen > 0).then(|| hit as f64 / seen as f64)
    }

    pub fn to_json(&self, feature_names: &[String]) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            params: self.params.clone(),
            classes: self.classes.clone(),
            n_features: self.n_features,
            feature_names: feature_names.to_vec(),
            trees: self.trees.clone(),
        };
        serde_json::to_string(&file).map_err(|e| ForgeError::json("<model>", e))
    }

    /// Parses a saved model; returns the forest and its feature names.
    pub fn from_json(text: &str) -> Result<(Self, Vec<String>)> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ForgeError::json("<model>", e))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ForgeError::ModelFormat {
                format: file.format,
                version: file.version,
            });
        }
        let forest = TrainedForest::from_trees(file.params, file.classes, file.n_features, file.trees)?;
        Ok((forest, file.feature_names))
    }

    pub fn save(&self, path: &Path, feature_names: &[String]) -> Result<()> {
        let text = self.to_json(feature_names)?;
        std::fs::write(path, text).map_err(|e| ForgeError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
        TrainedForest::from_json(&text).map_err(|e| match e {
            ForgeError::Json { source, .. } => ForgeError::json(path, source),
            other => other,
        })
    }
}
