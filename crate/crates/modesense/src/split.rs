//! Stratified train/test splitting.

use rand::seq::SliceRandom;

use crate::seed::RngSeed;
use crate::types::{Dataset, Mode};

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("test fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("class {mode} has {count} rows; every present class needs at least 2")]
    ClassTooSmall { mode: Mode, count: usize },
    #[error("dataset is empty")]
    Empty,
}

/// Round to the nearest integer, with halves rounding up.
fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Split a dataset into `(train, test)` with per-class proportions preserved.
///
/// Per-class test counts are `round(class_count * test_fraction)` (halves
/// round up), clamped so both sides keep at least one row of every present
/// class. If the clamped counts do not sum to `round(n * test_fraction)`,
/// the difference is corrected one row at a time starting with the largest
/// class. Row membership is drawn from `seed`; each side preserves the
/// original row order.
pub fn stratified_split(
    dataset: &Dataset,
    test_fraction: f64,
    seed: RngSeed,
) -> Result<(Dataset, Dataset), SplitError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(SplitError::BadFraction(test_fraction));
    }
    if dataset.rows.is_empty() {
        return Err(SplitError::Empty);
    }
    let counts = dataset.class_counts();
    for mode in Mode::ALL {
        let count = counts[mode.index()];
        if count == 1 {
            return Err(SplitError::ClassTooSmall { mode, count });
        }
    }

    let n = dataset.n_rows();
    let mut targets = [0usize; Mode::COUNT];
    for mode in Mode::ALL {
        let count = counts[mode.index()];
        if count > 0 {
            let raw = round_half_up(count as f64 * test_fraction);
            targets[mode.index()] = raw.clamp(1, count - 1);
        }
    }

    // Correct the total toward round(n * fraction), largest classes first,
    // without breaching the per-class [1, count-1] bounds.
    let feasible_min: usize = counts.iter().filter(|&&c| c > 0).map(|_| 1).sum();
    let feasible_max: usize = counts.iter().map(|&c| c.saturating_sub(1)).sum();
    let total_target = round_half_up(n as f64 * test_fraction).clamp(feasible_min, feasible_max);
    let mut by_size: Vec<usize> = (0..Mode::COUNT).filter(|&c| counts[c] > 0).collect();
    by_size.sort_by_key(|&c| (std::cmp::Reverse(counts[c]), c));
    loop {
        let total: usize = targets.iter().sum();
        if total == total_target {
            break;
        }
        let grow = total < total_target;
        let class = by_size
            .iter()
            .copied()
            .find(|&c| {
                if grow {
                    targets[c] < counts[c] - 1
                } else {
                    targets[c] > 1
                }
            })
            .expect("total target is clamped to the feasible range");
        if grow {
            targets[class] += 1;
        } else {
            targets[class] -= 1;
        }
    }

    // Draw test membership per class, then emit both sides in row order.
    let mut rng = seed.rng();
    let mut is_test = vec![false; n];
    for mode in Mode::ALL {
        let mut members: Vec<usize> = (0..n)
            .filter(|&i| dataset.rows[i].mode == mode)
            .collect();
        members.shuffle(&mut rng);
        for &row in members.iter().take(targets[mode.index()]) {
            is_test[row] = true;
        }
    }
    let test_rows: Vec<usize> = (0..n).filter(|&i| is_test[i]).collect();
    let train_rows: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
    Ok((dataset.select_rows(&train_rows), dataset.select_rows(&test_rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DataRow;

    fn dataset(counts: [usize; 3]) -> Dataset {
        let mut rows = Vec::new();
        for mode in Mode::ALL {
            for i in 0..counts[mode.index()] {
                rows.push(DataRow {
                    values: vec![i as f64, mode.index() as f64],
                    mode,
                });
            }
        }
        Dataset {
            feature_names: Dataset::standard_names(2),
            rows,
            speed_norm: None,
        }
    }

    #[test]
    fn default_study_population_splits_57_43_60() {
        let ds = dataset([142, 108, 150]);
        let (train, test) = stratified_split(&ds, 0.4, RngSeed(1)).unwrap();
        assert_eq!(test.class_counts(), [57, 43, 60]);
        assert_eq!(test.n_rows(), 160);
        assert_eq!(train.n_rows(), 240);
        assert_eq!(train.class_counts(), [85, 65, 90]);
    }

    #[test]
    fn ten_rows_at_half_gives_five() {
        let ds = dataset([10, 0, 0]);
        let (train, test) = stratified_split(&ds, 0.5, RngSeed(9)).unwrap();
        assert_eq!(test.n_rows(), 5);
        assert_eq!(train.n_rows(), 5);
    }

    #[test]
    fn both_sides_keep_every_present_class() {
        let ds = dataset([2, 40, 3]);
        let (train, test) = stratified_split(&ds, 0.9, RngSeed(3)).unwrap();
        for mode in Mode::ALL {
            assert!(train.class_counts()[mode.index()] >= 1, "{mode} lost from train");
            assert!(test.class_counts()[mode.index()] >= 1, "{mode} lost from test");
        }
    }

    #[test]
    fn split_is_a_partition() {
        let ds = dataset([20, 15, 25]);
        let (train, test) = stratified_split(&ds, 0.4, RngSeed(5)).unwrap();
        assert_eq!(train.n_rows() + test.n_rows(), ds.n_rows());
        let mut seen: Vec<&DataRow> = train.rows.iter().chain(test.rows.iter()).collect();
        seen.sort_by(|a, b| {
            a.values[0]
                .partial_cmp(&b.values[0])
                .unwrap()
                .then(a.mode.cmp(&b.mode))
        });
        let mut expected: Vec<&DataRow> = ds.rows.iter().collect();
        expected.sort_by(|a, b| {
            a.values[0]
                .partial_cmp(&b.values[0])
                .unwrap()
                .then(a.mode.cmp(&b.mode))
        });
        assert_eq!(seen, expected);
    }

    #[test]
    fn same_seed_same_split_different_seed_differs() {
        let ds = dataset([30, 30, 30]);
        let (train_a, test_a) = stratified_split(&ds, 0.4, RngSeed(11)).unwrap();
        let (train_b, test_b) = stratified_split(&ds, 0.4, RngSeed(11)).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
        let (_, test_c) = stratified_split(&ds, 0.4, RngSeed(12)).unwrap();
        assert_ne!(test_a.rows, test_c.rows, "independent seeds should move rows");
    }

    #[test]
    fn rejects_bad_fraction_and_tiny_classes() {
        let ds = dataset([10, 10, 10]);
        assert!(matches!(
            stratified_split(&ds, 0.0, RngSeed(0)),
            Err(SplitError::BadFraction(_))
        ));
        assert!(matches!(
            stratified_split(&ds, 1.0, RngSeed(0)),
            Err(SplitError::BadFraction(_))
        ));
        let tiny = dataset([1, 10, 10]);
        assert!(matches!(
            stratified_split(&tiny, 0.4, RngSeed(0)),
            Err(SplitError::ClassTooSmall { .. })
        ));
        assert!(matches!(
            stratified_split(&dataset([0, 0, 0]), 0.4, RngSeed(0)),
            Err(SplitError::Empty)
        ));
    }

    #[test]
    fn missing_classes_are_tolerated() {
        let ds = dataset([0, 12, 8]);
        let (train, test) = stratified_split(&ds, 0.25, RngSeed(2)).unwrap();
        assert_eq!(test.class_counts(), [0, 3, 2]);
        assert_eq!(train.class_counts(), [0, 9, 6]);
    }
}
