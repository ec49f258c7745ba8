//! Bootstrap ensembles of decision trees: bagging and random forests.
//!
//! Both train `n_trees` trees on bootstrap resamples (drawn with
//! replacement, same size as the training set) and predict by majority
//! vote, ties resolved to the lowest class index. A random forest
//! additionally restricts each tree to a random feature subset — by default
//! one fixed draw per tree, or a fresh draw at every split when
//! `per_split` is set.
//!
//! Per-tree randomness is derived from the ensemble seed through separate
//! "bootstrap" and "features" streams, so a forest allowed to keep all
//! features trains exactly the trees bagging would.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seed::RngSeed;
use crate::tree::{train_tree, FeatureSampling, Tree, TreeError, TreeParams};
use crate::types::{Dataset, Mode};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BaggingParams {
    pub n_trees: usize,
    pub tree: TreeParams,
}

impl Default for BaggingParams {
    fn default() -> BaggingParams {
        BaggingParams { n_trees: 400, tree: TreeParams::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features each tree (or each split, see `per_split`) may use.
    pub features_per_tree: usize,
    /// Redraw the feature subset at every split instead of once per tree.
    pub per_split: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> ForestParams {
        ForestParams {
            n_trees: 400,
            features_per_tree: 5,
            per_split: false,
            tree: TreeParams::default(),
        }
    }
}

/// A trained tree ensemble.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    /// The feature subset each tree was limited to; `None` for bagging and
    /// per-split forests. Trees store absolute feature indices either way,
    /// so this is bookkeeping, not needed to predict.
    pub feature_subsets: Option<Vec<Vec<usize>>>,
    pub n_features: usize,
}

impl Forest {
    pub fn votes(&self, values: &[f64]) -> [u64; Mode::COUNT] {
        let mut votes = [0u64; Mode::COUNT];
        for tree in &self.trees {
            votes[tree.predict(values).index()] += 1;
        }
        votes
    }

    pub fn predict(&self, values: &[f64]) -> Mode {
        let votes = self.votes(values);
        let mut best = 0;
        for c in 1..Mode::COUNT {
            if votes[c] > votes[best] {
                best = c;
            }
        }
        Mode::from_index(best).unwrap()
    }
}

/// `n` row indices drawn uniformly with replacement — one bootstrap
/// resample.
pub fn bootstrap_indices(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

enum TreeScope {
    AllFeatures,
    SubsetPerTree(usize),
    PerSplit(usize),
}

fn train_ensemble(
    train: &Dataset,
    n_trees: usize,
    tree_params: &TreeParams,
    scope: TreeScope,
    seed: RngSeed,
) -> Result<Forest, TreeError> {
    train.check_rectangular().map_err(TreeError::Shape)?;
    if train.n_rows() == 0 {
        return Err(TreeError::EmptyTrain);
    }
    if n_trees == 0 {
        return Err(TreeError::BadParams("n_trees must be at least 1".into()));
    }
    let p = train.n_features();
    if let TreeScope::SubsetPerTree(k) | TreeScope::PerSplit(k) = scope {
        if k == 0 || k > p {
            return Err(TreeError::BadFeatureSampling(format!(
                "feature draw of {k} from {p} features"
            )));
        }
    }

    let n = train.n_rows();
    let mut trees = Vec::with_capacity(n_trees);
    let mut subsets = Vec::new();
    for i in 0..n_trees {
        let tree_seed = seed.derive_index("tree", i as u64);
        let mut boot_rng = tree_seed.derive("bootstrap").rng();
        let sample = train.select_rows(&bootstrap_indices(&mut boot_rng, n));
        let tree = match scope {
            TreeScope::AllFeatures => train_tree(&sample, tree_params, FeatureSampling::All)?,
            TreeScope::SubsetPerTree(k) => {
                let mut feat_rng = tree_seed.derive("features").rng();
                let mut subset = rand::seq::index::sample(&mut feat_rng, p, k).into_vec();
                subset.sort_unstable();
                let tree = train_tree(&sample, tree_params, FeatureSampling::Subset(&subset))?;
                subsets.push(subset);
                tree
            }
            TreeScope::PerSplit(k) => train_tree(
                &sample,
                tree_params,
                FeatureSampling::PerSplit { n_features: k, seed: tree_seed.derive("features") },
            )?,
        };
        trees.push(tree);
    }
    Ok(Forest {
        trees,
        feature_subsets: (!subsets.is_empty()).then_some(subsets),
        n_features: p,
    })
}

/// Bagged trees: bootstrap resamples, every feature available to every
/// split.
pub fn train_bagged(
    train: &Dataset,
    params: &BaggingParams,
    seed: RngSeed,
) -> Result<Forest, TreeError> {
    train_ensemble(train, params.n_trees, &params.tree, TreeScope::AllFeatures, seed)
}

/// Random forest: bootstrap resamples plus random feature subsets.
pub fn train_forest(
    train: &Dataset,
    params: &ForestParams,
    seed: RngSeed,
) -> Result<Forest, TreeError> {
    let scope = if params.per_split {
        TreeScope::PerSplit(params.features_per_tree)
    } else {
        TreeScope::SubsetPerTree(params.features_per_tree)
    };
    train_ensemble(train, params.n_trees, &params.tree, scope, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeNode;
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

    fn noisy_bands(seed: u64, n_per_class: usize, p: usize) -> Dataset {
        let mut rng = RngSeed::new(seed).rng();
        let mut rows = Vec::new();
        for mode in Mode::ALL {
            for _ in 0..n_per_class {
                let mut values = vec![0.0; p];
                values[0] = mode.index() as f64 + 0.6 * rng.random::<f64>();
                for v in values.iter_mut().skip(1) {
                    *v = rng.random::<f64>();
                }
                rows.push((values, mode));
            }
        }
        dataset(rows)
    }

    fn small_tree_params() -> TreeParams {
        TreeParams { min_branch: 2, ..TreeParams::default() }
    }

    #[test]
    fn bagging_is_seed_deterministic() {
        let ds = noisy_bands(3, 15, 4);
        let params = BaggingParams { n_trees: 12, tree: small_tree_params() };
        let a = train_bagged(&ds, &params, RngSeed::new(7)).unwrap();
        let b = train_bagged(&ds, &params, RngSeed::new(7)).unwrap();
        assert_eq!(a, b);
        let c = train_bagged(&ds, &params, RngSeed::new(8)).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.trees.len(), 12);
        assert!(a.feature_subsets.is_none());
    }

    #[test]
    fn forest_keeping_all_features_trains_the_bagging_trees() {
        let ds = noisy_bands(5, 12, 4);
        let bagged = train_bagged(
            &ds,
            &BaggingParams { n_trees: 9, tree: small_tree_params() },
            RngSeed::new(11),
        )
        .unwrap();
        let forest = train_forest(
            &ds,
            &ForestParams {
                n_trees: 9,
                features_per_tree: 4,
                per_split: false,
                tree: small_tree_params(),
            },
            RngSeed::new(11),
        )
        .unwrap();
        assert_eq!(bagged.trees, forest.trees);
    }

    #[test]
    fn vote_ties_resolve_to_the_lowest_class() {
        let leaf = |mode: Mode| Tree {
            nodes: vec![TreeNode::Leaf { counts: [0, 0, 0], prediction: mode }],
            n_features: 1,
        };
        let forest = Forest {
            trees: vec![
                leaf(Mode::Walking),
                leaf(Mode::Biking),
                leaf(Mode::Biking),
                leaf(Mode::Driving),
                leaf(Mode::Driving),
            ],
            feature_subsets: None,
            n_features: 1,
        };
        assert_eq!(forest.votes(&[0.0]), [1, 2, 2]);
        assert_eq!(forest.predict(&[0.0]), Mode::Biking);
    }

    #[test]
    fn bootstrap_draws_stay_in_range_and_repeat_rows() {
        let mut rng = RngSeed::new(42).rng();
        let indices = bootstrap_indices(&mut rng, 100);
        assert_eq!(indices.len(), 100);
        assert!(indices.iter().all(|&i| i < 100));
        let mut distinct: Vec<usize> = indices.clone();
        distinct.sort_unstable();
        distinct.dedup();
        assert!(
            distinct.len() < 100,
            "a bootstrap of 100 rows virtually never hits all 100"
        );
    }

    #[test]
    fn forest_subsets_are_recorded_and_respected() {
        let ds = noisy_bands(9, 12, 6);
        let forest = train_forest(
            &ds,
            &ForestParams {
                n_trees: 8,
                features_per_tree: 2,
                per_split: false,
                tree: small_tree_params(),
            },
            RngSeed::new(3),
        )
        .unwrap();
        let subsets = forest.feature_subsets.as_ref().unwrap();
        assert_eq!(subsets.len(), 8);
        for (tree, subset) in forest.trees.iter().zip(subsets) {
            assert_eq!(subset.len(), 2);
            assert!(subset.windows(2).all(|w| w[0] < w[1]), "sorted, distinct");
            assert!(subset.iter().all(|&f| f < 6));
            for node in &tree.nodes {
                if let TreeNode::Split { feature, .. } = node {
                    assert!(subset.contains(feature));
                }
            }
        }
        assert!(
            subsets.windows(2).any(|w| w[0] != w[1]),
            "8 draws of 2-of-6 should not all collide"
        );
    }

    #[test]
    fn per_split_forest_learns_separable_data() {
        let ds = noisy_bands(13, 20, 4);
        let forest = train_forest(
            &ds,
            &ForestParams {
                n_trees: 30,
                features_per_tree: 2,
                per_split: true,
                tree: small_tree_params(),
            },
            RngSeed::new(21),
        )
        .unwrap();
        assert!(forest.feature_subsets.is_none());
        let correct = ds
            .rows
            .iter()
            .filter(|row| forest.predict(&row.values) == row.mode)
            .count();
        assert!(
            correct as f64 / ds.n_rows() as f64 > 0.9,
            "train accuracy {correct}/{}",
            ds.n_rows()
        );
    }

    #[test]
    fn invalid_ensembles_are_rejected() {
        let ds = noisy_bands(1, 5, 3);
        let none = BaggingParams { n_trees: 0, tree: small_tree_params() };
        assert!(matches!(
            train_bagged(&ds, &none, RngSeed::new(1)),
            Err(TreeError::BadParams(_))
        ));
        let wide = ForestParams {
            n_trees: 2,
            features_per_tree: 4,
            per_split: false,
            tree: small_tree_params(),
        };
        assert!(matches!(
            train_forest(&ds, &wide, RngSeed::new(1)),
            Err(TreeError::BadFeatureSampling(_))
        ));
        let empty = Dataset {
            feature_names: Dataset::standard_names(2),
            rows: vec![],
            speed_norm: None,
        };
        assert!(matches!(
            train_bagged(&empty, &BaggingParams::default(), RngSeed::new(1)),
            Err(TreeError::EmptyTrain)
        ));
    }

    #[test]
    fn forests_round_trip_through_json() {
        let ds = noisy_bands(17, 10, 4);
        let forest = train_forest(
            &ds,
            &ForestParams {
                n_trees: 5,
                features_per_tree: 2,
                per_split: false,
                tree: small_tree_params(),
            },
            RngSeed::new(2),
        )
        .unwrap();
        let json = serde_json::to_string(&forest).unwrap();
        let back: Forest = serde_json::from_str(&json).unwrap();
        assert_eq!(forest, back);
    }
}
