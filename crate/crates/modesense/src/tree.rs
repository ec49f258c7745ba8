//! CART-style decision trees over numeric features.
//!
//! Splits are binary thresholds at midpoints between consecutive distinct
//! feature values, chosen to minimize weighted child impurity (Gini by
//! default, entropy as an alternative). Rows with `value < threshold` go
//! left. The search scans features in ascending index order and thresholds
//! in ascending value order, keeping the first strict improvement among
//! ties, so training is fully deterministic.
//!
//! Feature candidates per split come from a [`FeatureSampling`] policy: all
//! features, a fixed subset (how a forest diversifies whole trees), or a
//! fresh random draw at every split.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seed::RngSeed;
use crate::types::{Dataset, Mode};

#[derive(Debug, thiserror::Error)]
pub enum TreeError {
    #[error("cannot train a tree on an empty dataset")]
    EmptyTrain,
    #[error("bad dataset shape: {0}")]
    Shape(String),
    #[error("bad feature sampling: {0}")]
    BadFeatureSampling(String),
    #[error("bad tree params: {0}")]
    BadParams(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitCriterion {
    Gini,
    Entropy,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    /// Minimum rows each child of a split must keep.
    pub min_leaf: usize,
    /// Minimum rows a node needs before a split is even attempted.
    pub min_branch: usize,
    pub criterion: SplitCriterion,
}

impl Default for TreeParams {
    fn default() -> TreeParams {
        TreeParams { min_leaf: 1, min_branch: 10, criterion: SplitCriterion::Gini }
    }
}

/// Where each split's candidate features come from.
pub enum FeatureSampling<'a> {
    /// Every feature is a candidate at every split.
    All,
    /// Only this fixed set of feature indices, tree-wide.
    Subset(&'a [usize]),
    /// A fresh uniform draw of `n_features` distinct indices at each split.
    PerSplit { n_features: usize, seed: RngSeed },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { counts: [u64; Mode::COUNT], prediction: Mode },
}

/// A trained tree: nodes in an arena with the root at index 0.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    pub n_features: usize,
}

impl Tree {
    pub fn predict(&self, values: &[f64]) -> Mode {
        assert_eq!(values.len(), self.n_features, "feature count mismatch");
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split { feature, threshold, left, right } => {
                    at = if values[*feature] < *threshold { *left } else { *right };
                }
                TreeNode::Leaf { prediction, .. } => return *prediction,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

fn impurity(criterion: SplitCriterion, counts: &[u64; Mode::COUNT]) -> f64 {
    let n = counts.iter().sum::<u64>() as f64;
    match criterion {
        SplitCriterion::Gini => {
            1.0 - counts
                .iter()
                .map(|&c| {
                    let p = c as f64 / n;
                    p * p
                })
                .sum::<f64>()
        }
        SplitCriterion::Entropy => counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum(),
    }
}

fn majority(counts: &[u64; Mode::COUNT]) -> Mode {
    let mut best = 0;
    for c in 1..Mode::COUNT {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    Mode::from_index(best).unwrap()
}

enum Sampler {
    Fixed(Vec<usize>),
    PerSplit { n_features: usize, p: usize, rng: ChaCha8Rng },
}

impl Sampler {
    fn candidates(&mut self) -> Vec<usize> {
        match self {
            Sampler::Fixed(f) => f.clone(),
            Sampler::PerSplit { n_features, p, rng } => {
                let mut drawn = rand::seq::index::sample(rng, *p, *n_features).into_vec();
                drawn.sort_unstable();
                drawn
            }
        }
    }
}

struct Builder<'a> {
    train: &'a Dataset,
    params: &'a TreeParams,
    sampler: Sampler,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    weighted_impurity: f64,
}

impl Builder<'_> {
    fn class_counts(&self, indices: &[usize]) -> [u64; Mode::COUNT] {
        let mut counts = [0u64; Mode::COUNT];
        for &i in indices {
            counts[self.train.rows[i].mode.index()] += 1;
        }
        counts
    }

    /// Best split of `indices`, or `None` when nothing strictly beats the
    /// parent impurity under the leaf-size constraints.
    fn search(&mut self, indices: &[usize], parent_impurity: f64) -> Option<BestSplit> {
        let n = indices.len();
        let mut best: Option<BestSplit> = None;
        let mut best_score = parent_impurity;
        for feature in self.sampler.candidates() {
            let mut column: Vec<(f64, usize)> = indices
                .iter()
                .map(|&i| (self.train.rows[i].values[feature], self.train.rows[i].mode.index()))
                .collect();
            column.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature value"));

            let mut left = [0u64; Mode::COUNT];
            let mut right = self.class_counts(indices);
            for i in 0..n - 1 {
                left[column[i].1] += 1;
                right[column[i].1] -= 1;
                let (lo, hi) = (column[i].0, column[i + 1].0);
                if hi <= lo {
                    continue;
                }
                let threshold = lo + (hi - lo) / 2.0;
                // Guard against midpoints that round onto the lower value
                // when neighbors are adjacent floats.
                if threshold <= lo {
                    continue;
                }
                let n_left = i + 1;
                let n_right = n - n_left;
                if n_left < self.params.min_leaf || n_right < self.params.min_leaf {
                    continue;
                }
                let weighted = (n_left as f64 * impurity(self.params.criterion, &left)
                    + n_right as f64 * impurity(self.params.criterion, &right))
                    / n as f64;
                if weighted < best_score {
                    best_score = weighted;
                    best = Some(BestSplit { feature, threshold, weighted_impurity: weighted });
                }
            }
        }
        best
    }

    fn build(&mut self, indices: &[usize]) -> usize {
        let counts = self.class_counts(indices);
        let node_impurity = impurity(self.params.criterion, &counts);
        let split = if indices.len() >= self.params.min_branch && node_impurity > 0.0 {
            self.search(indices, node_impurity)
        } else {
            None
        };
        let id = self.nodes.len();
        match split {
            None => {
                self.nodes.push(TreeNode::Leaf { counts, prediction: majority(&counts) });
            }
            Some(best) => {
                debug_assert!(best.weighted_impurity < node_impurity);
                let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
                    .iter()
                    .partition(|&&i| self.train.rows[i].values[best.feature] < best.threshold);
                // placeholder so children land after their parent
                self.nodes.push(TreeNode::Leaf { counts, prediction: majority(&counts) });
                let left = self.build(&left_idx);
                let right = self.build(&right_idx);
                self.nodes[id] = TreeNode::Split {
                    feature: best.feature,
                    threshold: best.threshold,
                    left,
                    right,
                };
            }
        }
        id
    }
}

/// Train a tree on the whole dataset.
pub fn train_tree(
    train: &Dataset,
    params: &TreeParams,
    features: FeatureSampling,
) -> Result<Tree, TreeError> {
    train.check_rectangular().map_err(TreeError::Shape)?;
    if train.n_rows() == 0 {
        return Err(TreeError::EmptyTrain);
    }
    if params.min_leaf == 0 {
        return Err(TreeError::BadParams("min_leaf must be at least 1".into()));
    }
    let p = train.n_features();
    let sampler = match features {
        FeatureSampling::All => Sampler::Fixed((0..p).collect()),
        FeatureSampling::Subset(subset) => {
            if subset.is_empty() {
                return Err(TreeError::BadFeatureSampling("empty feature subset".into()));
            }
            if let Some(&bad) = subset.iter().find(|&&f| f >= p) {
                return Err(TreeError::BadFeatureSampling(format!(
                    "feature index {bad} out of range for {p} features"
                )));
            }
            Sampler::Fixed(subset.to_vec())
        }
        FeatureSampling::PerSplit { n_features, seed } => {
            if n_features == 0 || n_features > p {
                return Err(TreeError::BadFeatureSampling(format!(
                    "per-split draw of {n_features} from {p} features"
                )));
            }
            Sampler::PerSplit { n_features, p, rng: seed.rng() }
        }
    };
    let mut builder = Builder { train, params, sampler, nodes: Vec::new() };
    let all: Vec<usize> = (0..train.n_rows()).collect();
    builder.build(&all);
    Ok(Tree { nodes: builder.nodes, n_features: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DataRow;

    fn dataset(rows: Vec<(Vec<f64>, Mode)>) -> Dataset {
        let n_features = rows[0].0.len();
        Dataset {
            feature_names: Dataset::standard_names(n_features),
            rows: rows
                .into_iter()
                .map(|(values, mode)| DataRow { values, mode })
                .collect(),
            speed_norm: None,
        }
    }

    fn eager() -> TreeParams {
        TreeParams { min_leaf: 1, min_branch: 2, criterion: SplitCriterion::Gini }
    }

    fn three_bands(n_per_class: usize) -> Dataset {
        let mut rows = Vec::new();
        for mode in Mode::ALL {
            for i in 0..n_per_class {
                let v = mode.index() as f64 + i as f64 / (2.0 * n_per_class as f64);
                rows.push((vec![v, (i % 3) as f64], mode));
            }
        }
        dataset(rows)
    }

    #[test]
    fn pure_node_is_a_single_leaf() {
        let ds = dataset(vec![
            (vec![1.0], Mode::Driving),
            (vec![2.0], Mode::Driving),
            (vec![3.0], Mode::Driving),
        ]);
        let tree = train_tree(&ds, &eager(), FeatureSampling::All).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(
            tree.nodes[0],
            TreeNode::Leaf { counts: [0, 0, 3], prediction: Mode::Driving }
        );
    }

    #[test]
    fn perfect_split_lands_on_the_midpoint() {
        let ds = dataset(vec![
            (vec![1.0], Mode::Walking),
            (vec![2.0], Mode::Walking),
            (vec![3.0], Mode::Biking),
            (vec![4.0], Mode::Biking),
        ]);
        for criterion in [SplitCriterion::Gini, SplitCriterion::Entropy] {
            let params = TreeParams { criterion, ..eager() };
            let tree = train_tree(&ds, &params, FeatureSampling::All).unwrap();
            match tree.nodes[0] {
                TreeNode::Split { feature, threshold, .. } => {
                    assert_eq!(feature, 0);
                    assert_eq!(threshold, 2.5);
                }
                ref other => panic!("expected a split at the root, got {other:?}"),
            }
            assert_eq!(tree.n_leaves(), 2);
            assert_eq!(tree.predict(&[0.0]), Mode::Walking);
            assert_eq!(tree.predict(&[2.4]), Mode::Walking);
            assert_eq!(tree.predict(&[2.5]), Mode::Biking, "threshold itself goes right");
            assert_eq!(tree.predict(&[10.0]), Mode::Biking);
        }
    }

    #[test]
    fn min_leaf_vetoes_isolating_splits() {
        // Isolating the lone Biking row at 1.0 is the best split but leaves
        // a 1-row child; with min_leaf 2 the split shifts to 10.5.
        let ds = dataset(vec![
            (vec![1.0], Mode::Biking),
            (vec![10.0], Mode::Walking),
            (vec![11.0], Mode::Walking),
            (vec![12.0], Mode::Walking),
        ]);
        let params = TreeParams { min_leaf: 2, min_branch: 2, criterion: SplitCriterion::Gini };
        let tree = train_tree(&ds, &params, FeatureSampling::All).unwrap();
        match tree.nodes[0] {
            TreeNode::Split { threshold, .. } => assert_eq!(threshold, 10.5),
            ref other => panic!("expected a split at the root, got {other:?}"),
        }
    }

    #[test]
    fn min_branch_stops_small_nodes_unsplit() {
        let ds = dataset(vec![
            (vec![1.0], Mode::Walking),
            (vec![2.0], Mode::Walking),
            (vec![3.0], Mode::Biking),
            (vec![4.0], Mode::Biking),
        ]);
        let tree = train_tree(&ds, &TreeParams::default(), FeatureSampling::All).unwrap();
        assert_eq!(tree.nodes.len(), 1, "4 rows < min_branch 10");
        assert_eq!(
            tree.nodes[0],
            TreeNode::Leaf { counts: [2, 2, 0], prediction: Mode::Walking },
            "majority tie resolves to the lowest class index"
        );
    }

    #[test]
    fn identical_rows_with_mixed_labels_become_a_leaf() {
        let ds = dataset(vec![
            (vec![5.0], Mode::Driving),
            (vec![5.0], Mode::Walking),
        ]);
        let tree = train_tree(&ds, &eager(), FeatureSampling::All).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.predict(&[5.0]), Mode::Walking);
    }

    #[test]
    fn tied_features_split_on_the_lower_index() {
        let ds = dataset(vec![
            (vec![1.0, 1.0], Mode::Walking),
            (vec![2.0, 2.0], Mode::Walking),
            (vec![3.0, 3.0], Mode::Biking),
            (vec![4.0, 4.0], Mode::Biking),
        ]);
        let tree = train_tree(&ds, &eager(), FeatureSampling::All).unwrap();
        match tree.nodes[0] {
            TreeNode::Split { feature, .. } => assert_eq!(feature, 0),
            ref other => panic!("expected a split at the root, got {other:?}"),
        }
    }

    #[test]
    fn subset_training_never_touches_other_features() {
        let ds = three_bands(10);
        let tree = train_tree(&ds, &eager(), FeatureSampling::Subset(&[1])).unwrap();
        for node in &tree.nodes {
            if let TreeNode::Split { feature, .. } = node {
                assert_eq!(*feature, 1);
            }
        }
    }

    #[test]
    fn separable_data_is_memorized_perfectly() {
        let ds = three_bands(8);
        let tree = train_tree(&ds, &eager(), FeatureSampling::All).unwrap();
        for row in &ds.rows {
            assert_eq!(tree.predict(&row.values), row.mode);
        }
    }

    #[test]
    fn per_split_sampling_is_seeded() {
        let ds = three_bands(12);
        let sample = |seed: u64| {
            train_tree(
                &ds,
                &eager(),
                FeatureSampling::PerSplit { n_features: 1, seed: RngSeed::new(seed) },
            )
            .unwrap()
        };
        assert_eq!(sample(4), sample(4));
        let trees: Vec<Tree> = (0..6).map(sample).collect();
        assert!(
            trees.windows(2).any(|w| w[0] != w[1]),
            "different seeds should eventually sample differently"
        );
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let ds = three_bands(4);
        let empty = Dataset {
            feature_names: Dataset::standard_names(2),
            rows: vec![],
            speed_norm: None,
        };
        assert!(matches!(
            train_tree(&empty, &eager(), FeatureSampling::All),
            Err(TreeError::EmptyTrain)
        ));
        assert!(matches!(
            train_tree(&ds, &eager(), FeatureSampling::Subset(&[])),
            Err(TreeError::BadFeatureSampling(_))
        ));
        assert!(matches!(
            train_tree(&ds, &eager(), FeatureSampling::Subset(&[0, 2])),
            Err(TreeError::BadFeatureSampling(_))
        ));
        assert!(matches!(
            train_tree(
                &ds,
                &eager(),
                FeatureSampling::PerSplit { n_features: 3, seed: RngSeed::new(1) }
            ),
            Err(TreeError::BadFeatureSampling(_))
        ));
        let zero_leaf = TreeParams { min_leaf: 0, ..eager() };
        assert!(matches!(
            train_tree(&ds, &zero_leaf, FeatureSampling::All),
            Err(TreeError::BadParams(_))
        ));
    }

    #[test]
    fn trees_round_trip_through_json() {
        let ds = three_bands(8);
        let tree = train_tree(&ds, &eager(), FeatureSampling::All).unwrap();
        let json = serde_json::to_string(&tree).unwrap();
        let back: Tree = serde_json::from_str(&json).unwrap();
        assert_eq!(tree, back);
        for row in &ds.rows {
            assert_eq!(tree.predict(&row.values), back.predict(&row.values));
        }
    }
}
