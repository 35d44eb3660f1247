use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::split::{search, Columns};
use crate::error::{ForgeError, Result};

/// One node of a fitted tree. Every node keeps the class counts of the
/// (bootstrap) samples that reached it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "t")]
        threshold: f64,
        #[serde(rename = "l")]
        left: usize,
        #[serde(rename = "r")]
        right: usize,
        /// Node size times the Gini decrease of the split.
        #[serde(rename = "d")]
        weighted_decrease: f64,
        #[serde(rename = "c")]
        counts: Vec<u32>,
    },
    Leaf {
        #[serde(rename = "c")]
        counts: Vec<u32>,
    },
}

impl Node {
    pub fn counts(&self) -> &[u32] {
        match self {
            Node::Split { counts, .. } | Node::Leaf { counts } => counts,
        }
    }

    pub fn n_samples(&self) -> u32 {
        self.counts().iter().sum()
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// Index of the largest count, lowest index on ties.
pub(crate) fn argmax(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: usize,
}

/// Binary CART tree over class indices `0..n_classes`. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_features: usize,
    n_classes: usize,
    nodes: Vec<Node>,
}

impl DecisionTree {
    /// Builds a tree from explicit nodes, checking child links and widths.
    pub fn from_nodes(n_features: usize, n_classes: usize, nodes: Vec<Node>) -> Result<Self> {
        let tree = DecisionTree {
            n_features,
            n_classes,
            nodes,
        };
        tree.check()?;
        Ok(tree)
    }

    pub(crate) fn check(&self) -> Result<()> {
        let bad = |why: String| Err(ForgeError::Config(format!("malformed tree: {why}")));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.counts().len() != self.n_classes {
                return bad(format!("node {i} has {} class counts", node.counts().len()));
            }
            if let Node::Split {
                feature,
                left,
                right,
                threshold,
                ..
            } = node
            {
                if *feature >= self.n_features {
                    return bad(format!("node {i} splits on feature {feature}"));
                }
                if *left <= i || *right <= i || *left >= self.nodes.len() || *right >= self.nodes.len() {
                    return bad(format!("node {i} has invalid children"));
                }
                if !threshold.is_finite() {
                    return bad(format!("node {i} has a non-finite threshold"));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn grow<C: Columns + ?Sized, R: Rng>(
        columns: &C,
        labels: &[usize],
        samples: Vec<usize>,
        n_features: usize,
        n_classes: usize,
        params: GrowParams,
        rng: &mut R,
    ) -> DecisionTree {
        let mut nodes = vec![Node::Leaf { counts: Vec::new() }];
        let mut stack = vec![(0usize, samples, 0usize)];
        let mut scratch = Vec::new();
        let all: Vec<usize> = (0..n_features).collect();
        while let Some((id, samples, depth)) = stack.pop() {
            let mut counts = vec![0u32; n_classes];
            for &i in &samples {
                counts[labels[i]] += 1;
            }
            let splittable = samples.len() >= params.min_samples_split.max(2)
                && params.max_depth.is_none_or(|d| depth < d)
                && counts.iter().filter(|&&c| c > 0).count() > 1;
            let found = if splittable {
                let candidates = if params.max_features >= n_features {
                    all.clone()
                } else {
                    // Draw order, not index order: equal-score splits are
                    // common in small nodes and a fixed index preference
                    // would inflate the importance of leading columns.
                    index::sample(rng, n_features, params.max_features).into_vec()
                };
                search(
                    columns,
                    labels,
                    &samples,
                    &candidates,
                    n_classes,
                    params.min_samples_leaf,
                    &mut scratch,
                )
            } else {
                None
            };
            match found {
                None => nodes[id] = Node::Leaf { counts },
                Some(found) => {
                    let s = found.candidate;
                    let (l, r): (Vec<usize>, Vec<usize>) = samples
                        .into_iter()
                        .partition(|&i| columns.value(i, s.feature) <= s.threshold);
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes.push(Node::Leaf { counts: Vec::new() });
                    nodes[id] = Node::Split {
                        feature: s.feature,
                        threshold: s.threshold,
                        left,
                        right,
                        weighted_decrease: found.weighted_decrease,
                        counts,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
            }
        }
        DecisionTree {
            n_features,
            n_classes,
            nodes,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = node {
                depth[*left] = depth[i] + 1;
                depth[*right] = depth[i] + 1;
                max = max.max(depth[i] + 1);
            }
        }
        max
    }

    /// Index of the leaf that `row` falls into.
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        while let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = &self.nodes[at]
        {
            at = if row[*feature] <= *threshold { *left } else { *right };
        }
        at
    }

    /// Majority class index of the leaf reached by `row`.
    pub fn predict_row(&self, row: &[f64]) -> usize {
        argmax(self.nodes[self.leaf_index(row)].counts())
    }

    /// Sum of weighted Gini decreases per feature, not normalized.
    pub fn raw_importances(&self) -> Vec<f64> {
        let mut imp = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split {
                feature,
                weighted_decrease,
                ..
            } = node
            {
                imp[*feature] += weighted_decrease;
            }
        }
        imp
    }
}
