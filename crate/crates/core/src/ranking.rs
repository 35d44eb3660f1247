//! Importance rankings, top-k feature selection and modality scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Modality};
use crate::error::{ForgeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub index: usize,
    pub name: String,
    pub importance: f64,
}

/// Indices of the `k` largest importances, largest first, lower index on
/// ties.
pub fn top_k_indices(importances: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > importances.len() {
        return Err(ForgeError::KOutOfRange {
            k,
            max: importances.len(),
        });
    }
    let mut order: Vec<usize> = (0..importances.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

pub fn top_k_features(importances: &[f64], names: &[String], k: usize) -> Result<Vec<RankedFeature>> {
    if names.len() != importances.len() {
        return Err(ForgeError::Arity {
            expected: importances.len(),
            found: names.len(),
        });
    }
    Ok(top_k_indices(importances, k)?
        .into_iter()
        .enumerate()
        .map(|(r, i)| RankedFeature {
            rank: r + 1,
            index: i,
            name: names[i].clone(),
            importance: importances[i],
        })
        .collect())
}

/// Keeps the `k` most important columns in their original order. Returns
/// the reduced dataset and the kept column indices.
pub fn select_features(data: &Dataset, importances: &[f64], k: usize) -> Result<(Dataset, Vec<usize>)> {
    if importances.len() != data.n_features() {
        return Err(ForgeError::Arity {
            expected: data.n_features(),
            found: importances.len(),
        });
    }
    let mut keep = top_k_indices(importances, k)?;
    keep.sort_unstable();
    Ok((data.select_features(&keep), keep))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityScore {
    pub modality: Modality,
    pub score: u64,
    pub features: usize,
}

/// Scores modalities from an ordered top-k list: position `i` (0-based)
/// weighs `k - i`, and each modality sums the weights of its features.
///
/// Every modality in `tags` appears in the output, zero if it has no
/// feature in the list. Sorted by score descending, then by name.
pub fn modality_scores(
    top: &[String],
    tags: &BTreeMap<String, Modality>,
) -> Result<Vec<ModalityScore>> {
    if top.is_empty() {
        return Err(ForgeError::Empty);
    }
    let k = top.len() as u64;
    let mut totals: BTreeMap<Modality, (u64, usize)> =
        tags.values().map(|&m| (m, (0, 0))).collect();
    for (i, name) in top.iter().enumerate() {
        let m = *tags
            .get(name)
            .ok_or_else(|| ForgeError::Untagged(name.clone()))?;
        let entry = totals.entry(m).or_insert((0, 0));
        entry.0 += k - i as u64;
        entry.1 += 1;
    }
    let mut scores: Vec<ModalityScore> = totals
        .into_iter()
        .map(|(modality, (score, features))| ModalityScore {
            modality,
            score,
            features,
        })
        .collect();
    scores.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then_with(|| a.modality.as_str().cmp(b.modality.as_str()))
    });
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;
    use proptest::prelude::*;

    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn top_two_of_three() {
        let top = top_k_features(&[0.2, 0.5, 0.3], &names(3), 2).unwrap();
        let got: Vec<_> = top.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(got, ["f1", "f2"]);
        assert_eq!(top[0].rank, 1);
    }

    #[test]
    fn full_k_is_a_permutation_and_ties_prefer_lower_index() {
        let order = top_k_indices(&[0.25, 0.25, 0.5, 0.0], 4).unwrap();
        assert_eq!(order, vec![2, 0, 1, 3]);
    }

    #[test]
    fn k_out_of_range() {
        assert!(top_k_indices(&[1.0], 2).is_err());
        assert!(top_k_indices(&[1.0], 0).is_err());
    }

    #[test]
    fn twenty_of_184() {
        let imp: Vec<f64> = (0..184).map(|i| ((i * 37) % 184) as f64).collect();
        let top = top_k_features(&imp, &names(184), 20).unwrap();
        assert_eq!(top.len(), 20);
        assert!(top.windows(2).all(|w| w[0].importance >= w[1].importance));
    }

    #[test]
    fn select_keeps_original_order() {
        let data = Dataset::new(
            names(4),
            vec![Modality::Sleep; 4],
            Array2::from_shape_fn((2, 4), |(i, j)| (i * 10 + j) as f64),
            vec![1, 2],
        )
        .unwrap();
        let (reduced, keep) = select_features(&data, &[0.1, 0.4, 0.2, 0.3], 2).unwrap();
        assert_eq!(keep, vec![1, 3]);
        assert_eq!(reduced.feature_names, vec!["f1", "f3"]);
        assert_eq!(reduced.features[[1, 1]], 13.0);
        let (same, _) = select_features(&data, &[0.1, 0.4, 0.2, 0.3], 4).unwrap();
        assert_eq!(same, data);
    }

    fn tags(pairs: &[(&str, Modality)]) -> BTreeMap<String, Modality> {
        pairs.iter().map(|(n, m)| (n.to_string(), *m)).collect()
    }

    #[test]
    fn three_features_two_modalities() {
        let t = tags(&[("a", Modality::Sleep), ("b", Modality::PhoneActivity), ("c", Modality::Sleep)]);
        let top = vec!["a".to_string(), "b".into(), "c".into()];
        let s = modality_scores(&top, &t).unwrap();
        assert_eq!(s[0].modality, Modality::Sleep);
        assert_eq!(s[0].score, 4);
        assert_eq!(s[1].modality, Modality::PhoneActivity);
        assert_eq!(s[1].score, 2);
    }

    #[test]
    fn one_modality_takes_everything() {
        let mut pairs: Vec<(String, Modality)> =
            (0..20).map(|i| (format!("s{i}"), Modality::Sleep)).collect();
        pairs.push(("w".into(), Modality::Weather));
        let t: BTreeMap<_, _> = pairs.into_iter().collect();
        let top: Vec<String> = (0..20).map(|i| format!("s{i}")).collect();
        let s = modality_scores(&top, &t).unwrap();
        assert_eq!((s[0].modality, s[0].score), (Modality::Sleep, 210));
        assert_eq!((s[1].modality, s[1].score), (Modality::Weather, 0));
    }

    #[test]
    fn untagged_feature_is_an_error() {
        let t = tags(&[("a", Modality::Sleep)]);
        let err = modality_scores(&["z".to_string()], &t).unwrap_err();
        assert!(matches!(err, ForgeError::Untagged(n) if n == "z"));
    }

    proptest! {
        #[test]
        fn scores_sum_to_triangular_number_and_ignore_scale(
            imp in proptest::collection::vec(0.0f64..1.0, 3..40),
            k_frac in 0.0f64..1.0,
            scale in 0.01f64..100.0,
        ) {
            let n = imp.len();
            let k = 1 + ((n - 1) as f64 * k_frac) as usize;
            let nm = names(n);
            let t: BTreeMap<String, Modality> = nm
                .iter()
                .enumerate()
                .map(|(i, name)| (name.clone(), Modality::ALL[i % Modality::ALL.len()]))
                .collect();
            let top: Vec<String> = top_k_features(&imp, &nm, k).unwrap().into_iter().map(|f| f.name).collect();
            let scores = modality_scores(&top, &t).unwrap();
            let total: u64 = scores.iter().map(|s| s.score).sum();
            prop_assert_eq!(total, (k * (k + 1) / 2) as u64);

            let scaled: Vec<f64> = imp.iter().map(|v| v * scale).collect();
            let top2: Vec<String> = top_k_features(&scaled, &nm, k).unwrap().into_iter().map(|f| f.name).collect();
            if top2 == top {
                prop_assert_eq!(modality_scores(&top2, &t).unwrap(), scores);
            }
        }
    }
}
