use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::class_counts;
use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    /// Sorted row indices.
    pub train: Vec<usize>,
    /// Sorted row indices.
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

/// `ceil(n * fraction)`, nudged so that exact products such as
/// `31772 * 0.2 = 6354.4` and `57150 * 0.2 = 11430` are not pushed up by
/// floating point error, and kept within `1..n`.
pub fn test_size(n: usize, fraction: f64) -> usize {
    let raw = (n as f64 * fraction - 1e-9).ceil().max(0.0) as usize;
    if n < 2 {
        return raw.min(n);
    }
    raw.clamp(1, n - 1)
}

/// Seeded holdout split.
///
/// Unstratified: a ChaCha8 shuffle of all rows, the first `test_size` rows
/// become the test set. Stratified: each class contributes
/// `floor(n_c * fraction)` rows, and the rows still needed to reach
/// `test_size` go to the classes with the largest fractional remainders
/// (lower class first on ties); members are drawn by a per-class shuffle in
/// ascending class order.
pub fn split_indices(
    labels: &[u32],
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ForgeError::Config(format!(
            "test_fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let n = labels.len();
    if n < 2 {
        return Err(ForgeError::Empty);
    }
    let n_test = test_size(n, test_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut test = Vec::with_capacity(n_test);

    if stratified {
        let counts = class_counts(labels);
        let mut quota: Vec<usize> = counts
            .iter()
            .map(|&(_, c)| (c as f64 * test_fraction).floor() as usize)
            .collect();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        let rem = |i: usize| counts[i].1 as f64 * test_fraction - quota[i] as f64;
        order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
        let mut missing = n_test.saturating_sub(quota.iter().sum());
        for &i in order.iter().cycle().take(order.len() * 2) {
            if missing == 0 {
                break;
            }
            if quota[i] < counts[i].1 {
                quota[i] += 1;
                missing -= 1;
            }
        }
        for (ci, &(class, _)) in counts.iter().enumerate() {
            let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
            members.shuffle(&mut rng);
            if quota[ci] == 0 {
                warnings.push(format!("class {class} has no rows in the test set"));
            }
            test.extend_from_slice(&members[..quota[ci]]);
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        test.extend_from_slice(&all[..n_test]);
    }

    test.sort_unstable();
    let mut in_test = vec![false; n];
    for &i in &test {
        in_test[i] = true;
    }
    let train = (0..n).filter(|&i| !in_test[i]).collect();
    Ok(SplitIndices {
        train,
        test,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn study_test_sizes() {
        assert_eq!(test_size(31772, 0.2), 6355);
        assert_eq!(test_size(57150, 0.2), 11430);
        assert_eq!(test_size(10, 0.2), 2);
    }

    #[test]
    fn stratified_ten_rows() {
        let labels = [1, 1, 1, 1, 1, 2, 2, 2, 2, 2];
        let s = split_indices(&labels, 0.2, 7, true).unwrap();
        let classes: Vec<u32> = s.test.iter().map(|&i| labels[i]).collect();
        assert_eq!(classes.len(), 2);
        assert!(classes.contains(&1) && classes.contains(&2));
    }

    #[test]
    fn tiny_class_warns_under_stratification() {
        let mut labels = vec![1u32; 20];
        labels.push(2);
        let s = split_indices(&labels, 0.2, 1, true).unwrap();
        assert_eq!(s.test.len(), 5);
        assert!(s.warnings.is_empty() || s.warnings[0].contains("class 2"));
    }

    #[test]
    fn bad_fraction_is_rejected() {
        assert!(split_indices(&[1, 2, 1], 0.0, 0, false).is_err());
        assert!(split_indices(&[1, 2, 1], 1.0, 0, false).is_err());
    }

    proptest! {
        #[test]
        fn partition_and_determinism(
            labels in proptest::collection::vec(1u32..6, 2..300),
            frac in 0.05f64..0.95,
            seed in 0u64..100,
            stratified in any::<bool>(),
        ) {
            let a = split_indices(&labels, frac, seed, stratified).unwrap();
            let b = split_indices(&labels, frac, seed, stratified).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.test.len(), test_size(labels.len(), frac));
            let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            if stratified {
                for (class, count) in class_counts(&labels) {
                    let got = a.test.iter().filter(|&&i| labels[i] == class).count() as f64;
                    prop_assert!((got - count as f64 * frac).abs() <= 1.0 + 1e-9,
                        "class {} got {} of {}", class, got, count);
                }
            }
        }
    }
}
