//! Gini split search.
//!
//! Candidate splits are compared exactly. For a node with `n` samples split
//! into `nl` and `nr`, the weighted Gini decrease is
//! `(Sl/nl + Sr/nr - Sp/n) / n`, where `S` is the sum of squared class counts.
//! Every quantity is an integer, so two splits compare by cross-multiplying
//! in `u128` and ties are real ties, broken by (lower feature, lower
//! threshold).

use std::cmp::Ordering;

use ndarray::ArrayView2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Gini(parent) minus the size-weighted Gini of the children.
    pub decrease: f64,
}

#[derive(Debug, Clone, Copy)]
struct Score {
    left_sq: u64,
    left_n: u64,
    right_sq: u64,
    right_n: u64,
}

impl Score {
    // Sl/nl + Sr/nr == num / den
    fn num(&self) -> u128 {
        self.left_sq as u128 * self.right_n as u128 + self.right_sq as u128 * self.left_n as u128
    }

    fn den(&self) -> u128 {
        self.left_n as u128 * self.right_n as u128
    }

    fn cmp(&self, other: &Score) -> Ordering {
        (self.num() * other.den()).cmp(&(other.num() * self.den()))
    }

    /// `n * (Sl/nl + Sr/nr) - Sp` over `nl * nr`, i.e. `n` times the weighted
    /// decrease. Returns the exact numerator; zero or negative means no gain.
    fn gain_num(&self, parent_sq: u64) -> i128 {
        let n = (self.left_n + self.right_n) as i128;
        self.num() as i128 * n - parent_sq as i128 * self.den() as i128
    }

    fn decrease(&self, parent_sq: u64) -> f64 {
        let n = (self.left_n + self.right_n) as f64;
        self.gain_num(parent_sq) as f64 / (self.den() as f64 * n * n)
    }
}

pub(crate) fn sum_sq(counts: &[u32]) -> u64 {
    counts.iter().map(|&c| c as u64 * c as u64).sum()
}

/// Midpoint of two consecutive distinct values, falling back to the lower
/// value if rounding would put the midpoint on the upper one.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}

/// Column-major feature access used by the tree builder.
pub(crate) trait Columns: Sync {
    fn value(&self, row: usize, feature: usize) -> f64;
}

impl Columns for [Vec<f64>] {
    fn value(&self, row: usize, feature: usize) -> f64 {
        self[feature][row]
    }
}

impl Columns for ArrayView2<'_, f64> {
    fn value(&self, row: usize, feature: usize) -> f64 {
        self[[row, feature]]
    }
}

pub(crate) struct Found {
    pub candidate: SplitCandidate,
    /// `n` times the weighted decrease, for importance bookkeeping.
    pub weighted_decrease: f64,
}

/// Best split over `candidates`, visited in the given order; on equal
/// scores the earlier candidate wins, then the lower threshold.
pub(crate) fn search<C: Columns + ?Sized>(
    columns: &C,
    labels: &[usize],
    samples: &[usize],
    candidates: &[usize],
    n_classes: usize,
    min_samples_leaf: usize,
    scratch: &mut Vec<(f64, usize)>,
) -> Option<Found> {
    let n = samples.len();
    if n < 2 {
        return None;
    }
    let mut parent = vec![0u32; n_classes];
    for &i in samples {
        parent[labels[i]] += 1;
    }
    let parent_sq = sum_sq(&parent);
    if parent.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let min_leaf = min_samples_leaf.max(1);

    let mut best: Option<(Score, usize, f64)> = None;
    let mut left = vec![0u32; n_classes];
    let mut right = vec![0u32; n_classes];
    for &feature in candidates {
        scratch.clear();
        scratch.extend(samples.iter().map(|&i| (columns.value(i, feature), labels[i])));
        scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if scratch[0].0 == scratch[n - 1].0 {
            continue;
        }
        left.iter_mut().for_each(|c| *c = 0);
        right.copy_from_slice(&parent);
        let mut left_sq = 0u64;
        let mut right_sq = parent_sq;
        for pos in 0..n - 1 {
            let c = scratch[pos].1;
            left_sq += 2 * left[c] as u64 + 1;
            left[c] += 1;
            right_sq -= 2 * right[c] as u64 - 1;
            right[c] -= 1;
            let (lo, hi) = (scratch[pos].0, scratch[pos + 1].0);
            if lo == hi {
                continue;
            }
            let nl = pos + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let score = Score {
                left_sq,
                left_n: nl as u64,
                right_sq,
                right_n: nr as u64,
            };
            let better = match &best {
                None => true,
                Some((b, _, _)) => score.cmp(b) == Ordering::Greater,
            };
            if better {
                best = Some((score, feature, midpoint(lo, hi)));
            }
        }
    }

    let (score, feature, threshold) = best?;
    if score.gain_num(parent_sq) <= 0 {
        return None;
    }
    let decrease = score.decrease(parent_sq);
    Some(Found {
        candidate: SplitCandidate {
            feature,
            threshold,
            decrease,
        },
        weighted_decrease: decrease * n as f64,
    })
}

/// Best Gini split of `samples` over `candidate_features`.
///
/// `labels[i]` is the class index (0-based, below `n_classes`) of row `i`.
/// Thresholds sit at midpoints of consecutive distinct sorted values and
/// rows with `x <= threshold` go left. Returns `None` when no split leaves
/// `min_samples_leaf` rows on both sides with a strictly positive decrease.
pub fn best_split(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    samples: &[usize],
    candidate_features: &[usize],
    n_classes: usize,
    min_samples_leaf: usize,
) -> Option<SplitCandidate> {
    let mut candidates = candidate_features.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let mut scratch = Vec::with_capacity(samples.len());
    search(
        &features,
        labels,
        samples,
        &candidates,
        n_classes,
        min_samples_leaf,
        &mut scratch,
    )
    .map(|f| f.candidate)
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    use super::*;

    fn gini(labels: &[usize], n_classes: usize) -> f64 {
        let mut counts = vec![0usize; n_classes];
        for &l in labels {
            counts[l] += 1;
        }
        let n = labels.len() as f64;
        1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
    }

    /// Exhaustive enumeration over every (feature, midpoint) pair.
    fn brute_force(x: &Array2<f64>, y: &[usize], n_classes: usize) -> Option<(usize, f64, f64)> {
        let n = y.len() as f64;
        let parent = gini(y, n_classes);
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..x.ncols() {
            let mut values: Vec<f64> = x.column(f).to_vec();
            values.sort_by(f64::total_cmp);
            values.dedup();
            for w in values.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (l, r): (Vec<usize>, Vec<usize>) =
                    (0..y.len()).partition(|&i| x[[i, f]] <= t);
                let ly: Vec<usize> = l.iter().map(|&i| y[i]).collect();
                let ry: Vec<usize> = r.iter().map(|&i| y[i]).collect();
                let dec = parent
                    - ly.len() as f64 / n * gini(&ly, n_classes)
                    - ry.len() as f64 / n * gini(&ry, n_classes);
                if dec > 1e-12 && best.is_none_or(|(_, _, b)| dec > b + 1e-12) {
                    best = Some((f, t, dec));
                }
            }
        }
        best
    }

    #[test]
    fn perfect_split_of_four_points() {
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = [0, 0, 1, 1];
        let s = best_split(x.view(), &y, &[0, 1, 2, 3], &[0], 2, 1).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 2.5);
        assert!((s.decrease - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_node_has_no_split() {
        let x = array![[1.0], [2.0], [3.0]];
        assert!(best_split(x.view(), &[1, 1, 1], &[0, 1, 2], &[0], 2, 1).is_none());
    }

    #[test]
    fn constant_feature_has_no_split() {
        let x = array![[1.0], [1.0], [1.0]];
        assert!(best_split(x.view(), &[0, 1, 0], &[0, 1, 2], &[0], 2, 1).is_none());
    }

    #[test]
    fn equal_splits_prefer_lower_feature_then_lower_threshold() {
        // Both features separate the classes identically.
        let x = array![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]];
        let y = [0, 1, 1, 0];
        let s = best_split(x.view(), &y, &[0, 1, 2, 3], &[1, 0], 2, 1).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn min_samples_leaf_excludes_edge_thresholds() {
        let x = array![[1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = [0, 1, 1, 1, 1];
        assert_eq!(best_split(x.view(), &y, &[0, 1, 2, 3, 4], &[0], 2, 1).unwrap().threshold, 1.5);
        assert_eq!(best_split(x.view(), &y, &[0, 1, 2, 3, 4], &[0], 2, 2).unwrap().threshold, 2.5);
    }

    #[test]
    fn eight_samples_three_features_match_enumeration() {
        let x = array![
            [0.3, 5.0, 1.0],
            [1.2, 3.0, 1.0],
            [2.2, 4.0, 0.0],
            [0.7, 1.0, 0.0],
            [3.1, 2.0, 1.0],
            [2.9, 6.0, 0.0],
            [1.8, 7.0, 1.0],
            [0.1, 8.0, 0.0]
        ];
        let y = [0, 0, 1, 0, 2, 1, 2, 0];
        let got = best_split(x.view(), &y, &(0..8).collect::<Vec<_>>(), &[0, 1, 2], 3, 1).unwrap();
        let (f, t, d) = brute_force(&x, &y, 3).unwrap();
        assert_eq!((got.feature, got.threshold), (f, t));
        assert!((got.decrease - d).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn agrees_with_enumeration(
            rows in proptest::collection::vec(
                (proptest::collection::vec(0i32..6, 3), 0usize..3),
                2..24,
            )
        ) {
            let n = rows.len();
            let x = Array2::from_shape_fn((n, 3), |(i, j)| rows[i].0[j] as f64 * 0.5);
            let y: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let samples: Vec<usize> = (0..n).collect();
            let got = best_split(x.view(), &y, &samples, &[0, 1, 2], 3, 1);
            let want = brute_force(&x, &y, 3);
            match (got, want) {
                (None, None) => {}
                (Some(g), Some((f, t, d))) => {
                    prop_assert_eq!((g.feature, g.threshold), (f, t));
                    prop_assert!((g.decrease - d).abs() < 1e-12);
                }
                (g, w) => prop_assert!(false, "got {:?}, want {:?}", g, w),
            }
        }
    }
}
