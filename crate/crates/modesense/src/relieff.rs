//! Feature ranking with the multiclass ReliefF criterion.
//!
//! ReliefF scores a feature by how well it separates classes locally: for
//! sampled rows it subtracts the feature's scaled difference to the nearest
//! same-class rows (hits) and adds the prior-weighted differences to the
//! nearest rows of every other class (misses). Weights land in [-1, 1];
//! higher is more discriminative.
//!
//! Rows are processed in a canonical order derived from their scaled values
//! and labels — never from their position in the input — so reordering the
//! dataset cannot change the weights.

use serde::{Deserialize, Serialize};

use crate::seed::RngSeed;
use crate::types::{Dataset, Mode};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum ReliefFError {
    #[error("need at least 2 rows to rank features, got {0}")]
    TooFewRows(usize),
    #[error("all rows share one class, ranking is undefined")]
    SingleClass,
    #[error("k_neighbors must be at least 1")]
    BadK,
    #[error("sample_count must be at least 1 when given")]
    BadSampleCount,
    #[error("bad dataset shape: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ReliefFParams {
    /// Nearest hits/misses considered per sampled row (clamped to what a
    /// class can offer).
    pub k_neighbors: usize,
    /// Rows to sample with replacement; `None` visits every row once and
    /// uses no randomness.
    pub sample_count: Option<usize>,
}

impl Default for ReliefFParams {
    fn default() -> ReliefFParams {
        ReliefFParams { k_neighbors: 10, sample_count: None }
    }
}

/// ReliefF output: per-feature weights (input order) and the feature
/// indices sorted most-discriminative first.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub weights: Vec<f64>,
    pub ranking: Vec<usize>,
}

/// Indices of `weights` in descending weight order; ties go to the lower
/// feature index.
pub(crate) fn rank_descending(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .expect("finite weights")
            .then(a.cmp(&b))
    });
    order
}

/// Rank a labeled dataset's features with ReliefF.
pub fn relieff_rank(
    dataset: &Dataset,
    params: &ReliefFParams,
    seed: RngSeed,
) -> Result<FeatureWeights, ReliefFError> {
    dataset.check_rectangular().map_err(ReliefFError::Shape)?;
    let n = dataset.n_rows();
    let p = dataset.n_features();
    if n < 2 {
        return Err(ReliefFError::TooFewRows(n));
    }
    if params.k_neighbors == 0 {
        return Err(ReliefFError::BadK);
    }
    if params.sample_count == Some(0) {
        return Err(ReliefFError::BadSampleCount);
    }
    let counts = dataset.class_counts();
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(ReliefFError::SingleClass);
    }
    let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    // Min-max scale each feature; constant features scale to all zeros.
    let mut scaled = vec![vec![0.0f64; p]; n];
    for f in 0..p {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &dataset.rows {
            lo = lo.min(row.values[f]);
            hi = hi.max(row.values[f]);
        }
        let range = if hi > lo { hi - lo } else { 1.0 };
        for (i, row) in dataset.rows.iter().enumerate() {
            scaled[i][f] = (row.values[f] - lo) / range;
        }
    }

    // Canonical row order: scaled values lexicographically, then label.
    // Rows identical under this key are interchangeable, so any input
    // permutation yields the same weights.
    let mut canon: Vec<usize> = (0..n).collect();
    canon.sort_by(|&a, &b| {
        scaled[a]
            .iter()
            .zip(&scaled[b])
            .find_map(|(x, y)| {
                let ord = x.partial_cmp(y).expect("finite scaled value");
                (ord != std::cmp::Ordering::Equal).then_some(ord)
            })
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(dataset.rows[a].mode.index().cmp(&dataset.rows[b].mode.index()))
    });
    let rows: Vec<&Vec<f64>> = canon.iter().map(|&i| &scaled[i]).collect();
    let labels: Vec<Mode> = canon.iter().map(|&i| dataset.rows[i].mode).collect();

    let samples: Vec<usize> = match params.sample_count {
        None => (0..n).collect(),
        Some(m) => {
            let mut rng = seed.rng();
            (0..m).map(|_| rng.random_range(0..n)).collect()
        }
    };
    let m = samples.len() as f64;

    let mut weights = vec![0.0f64; p];
    let mut by_class: Vec<Vec<(f64, usize)>> = Vec::new();
    for &r in &samples {
        // Distance from r to every other row, grouped by the other row's
        // class; ties broken by canonical index.
        by_class.clear();
        by_class.resize(Mode::COUNT, Vec::new());
        for j in 0..n {
            if j == r {
                continue;
            }
            let dist: f64 = rows[r]
                .iter()
                .zip(rows[j])
                .map(|(x, y)| (x - y).abs())
                .sum();
            by_class[labels[j].index()].push((dist, j));
        }
        for group in &mut by_class {
            group.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distance").then(a.1.cmp(&b.1)));
        }

        let r_class = labels[r].index();
        for (class, group) in by_class.iter().enumerate() {
            let k = params.k_neighbors.min(group.len());
            if k == 0 {
                continue;
            }
            let scale = if class == r_class {
                -1.0 / (m * k as f64)
            } else {
                priors[class] / (1.0 - priors[r_class]) / (m * k as f64)
            };
            for &(_, j) in &group[..k] {
                for f in 0..p {
                    weights[f] += scale * (rows[r][f] - rows[j][f]).abs();
                }
            }
        }
    }

    let ranking = rank_descending(&weights);
    Ok(FeatureWeights { weights, ranking })
}
