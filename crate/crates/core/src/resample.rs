//! SMOTE oversampling of minority classes.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, Dataset};
use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteParams {
    pub k: usize,
    /// Rows per class after balancing; the majority class size when unset.
    pub target_count: Option<usize>,
    pub seed: u64,
    /// Z-score features before measuring neighbour distances. Synthetic
    /// rows are always interpolated in the original units.
    pub standardize: bool,
}

impl Default for SmoteParams {
    fn default() -> Self {
        SmoteParams {
            k: 5,
            target_count: None,
            seed: 0,
            standardize: false,
        }
    }
}

/// Whether oversampling runs on the whole table before the train/test split
/// or on the training part only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    BeforeSplit,
    AfterSplit,
}

impl Placement {
    pub fn as_str(self) -> &'static str {
        match self {
            Placement::BeforeSplit => "before_split",
            Placement::AfterSplit => "after_split",
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "before" | "before_split" => Ok(Placement::BeforeSplit),
            "after" | "after_split" => Ok(Placement::AfterSplit),
            other => Err(format!("placement must be before or after, got `{other}`")),
        }
    }
}

/// Where a synthetic row came from. `base` and `neighbor` index input rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrigin {
    pub class: u32,
    pub base: usize,
    pub neighbor: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    /// Input rows first, unchanged, then synthetic rows.
    pub features: Array2<f64>,
    pub labels: Vec<u32>,
    pub n_original: usize,
    /// One entry per synthetic row, in output order.
    pub origins: Vec<SyntheticOrigin>,
}

fn squared_distance(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Positions (within `members`) of the `k` rows of `points` listed in
/// `members` nearest to `members[query]`, nearest first, lower position on
/// ties.
fn neighbours_within(
    points: ArrayView2<'_, f64>,
    members: &[usize],
    query: usize,
    k: usize,
) -> Vec<usize> {
    let q = points.row(members[query]);
    let mut dist: Vec<(f64, usize)> = members
        .iter()
        .enumerate()
        .filter(|&(pos, _)| pos != query)
        .map(|(pos, &row)| (squared_distance(q, points.row(row)), pos))
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, order);
        dist.truncate(k);
    }
    dist.sort_unstable_by(order);
    dist.into_iter().map(|(_, pos)| pos).collect()
}

/// The `k` nearest neighbours of `points[query_index]` among the other rows
/// of `points` by Euclidean distance, nearest first, lower index on ties.
pub fn knn_minority(points: ArrayView2<'_, f64>, query_index: usize, k: usize) -> Result<Vec<usize>> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(ForgeError::KOutOfRange {
            k,
            max: n.saturating_sub(1),
        });
    }
    if query_index >= n {
        return Err(ForgeError::KOutOfRange {
            k: query_index,
            max: n - 1,
        });
    }
    let members: Vec<usize> = (0..n).collect();
    Ok(neighbours_within(points, &members, query_index, k))
}

fn standardized(features: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = features.to_owned();
    for mut col in out.axis_iter_mut(Axis(1)) {
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    out
}

/// Oversamples every class up to the target count.
///
/// For each class below the target (ascending class order) the shortfall is
/// spread over the class's rows: each row is used `need / n_c` times, and a
/// seeded random subset of `need % n_c` rows once more. Rows are then
/// visited in ascending order; each use draws one of the row's `k` nearest
/// same-class neighbours and a `u` in `[0, 1)`, and emits
/// `x + u * (neighbour - x)`. All draws come from one ChaCha8 stream, so
/// the output depends only on the inputs and the seed.
pub fn smote_balance(
    features: ArrayView2<'_, f64>,
    labels: &[u32],
    params: &SmoteParams,
) -> Result<SmoteOutput> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(ForgeError::LengthMismatch {
            left: labels.len(),
            right: n,
        });
    }
    if n == 0 {
        return Err(ForgeError::Empty);
    }
    for ((row, column), v) in features.indexed_iter() {
        if !v.is_finite() {
            return Err(ForgeError::NonFinite { row, column });
        }
    }
    let counts = class_counts(labels);
    if counts.len() < 2 {
        return Err(ForgeError::TooFewClasses(counts.len()));
    }
    if params.k == 0 {
        return Err(ForgeError::Config("SMOTE k must be at least 1".into()));
    }
    let majority = counts.iter().map(|&(_, c)| c).max().unwrap_or(0);
    let target = params.target_count.unwrap_or(majority);
    if target < majority {
        return Err(ForgeError::Config(format!(
            "target_count {target} is below the majority class size {majority}"
        )));
    }
    for &(class, count) in &counts {
        if count < target && count <= params.k {
            return Err(ForgeError::ClassTooSmall {
                class,
                count,
                k: params.k,
            });
        }
    }

    let scaled = params.standardize.then(|| standardized(features));
    let metric = scaled.as_ref().map_or(features, |s| s.view());
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let total_new: usize = counts.iter().map(|&(_, c)| target - c).sum();
    let mut origins = Vec::with_capacity(total_new);

    for &(class, count) in &counts {
        let need = target - count;
        if need == 0 {
            continue;
        }
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        let mut uses = vec![need / count; count];
        for extra in index::sample(&mut rng, count, need % count) {
            uses[extra] += 1;
        }
        let used: Vec<usize> = (0..count).filter(|&p| uses[p] > 0).collect();
        let neighbours: Vec<Vec<usize>> = used
            .par_iter()
            .map(|&p| neighbours_within(metric, &members, p, params.k))
            .collect();
        for (&p, nn) in used.iter().zip(&neighbours) {
            for _ in 0..uses[p] {
                let pick = nn[rng.random_range(0..nn.len())];
                let u: f64 = rng.random();
                origins.push(SyntheticOrigin {
                    class,
                    base: members[p],
                    neighbor: members[pick],
                    u,
                });
            }
        }
    }

    let d = features.ncols();
    let mut out = Array2::zeros((n + origins.len(), d));
    out.slice_mut(ndarray::s![..n, ..]).assign(&features);
    for (s, o) in origins.iter().enumerate() {
        let base = features.row(o.base);
        let nb = features.row(o.neighbor);
        for j in 0..d {
            out[[n + s, j]] = base[j] + o.u * (nb[j] - base[j]);
        }
    }
    let mut out_labels = labels.to_vec();
    out_labels.extend(origins.iter().map(|o| o.class));
    Ok(SmoteOutput {
        features: out,
        labels: out_labels,
        n_original: n,
        origins,
    })
}

/// [`smote_balance`] on a dataset; names and modalities carry over.
pub fn smote_dataset(data: &Dataset, params: &SmoteParams) -> Result<(Dataset, Vec<SyntheticOrigin>)> {
    let out = smote_balance(data.features.view(), &data.labels, params)?;
    let balanced = Dataset::new(
        data.feature_names.clone(),
        data.modalities.clone(),
        out.features,
        out.labels,
    )?;
    Ok((balanced, out.origins))
}
