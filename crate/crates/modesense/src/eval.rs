//! Confusion matrices, per-class recall/precision, overall accuracy, and
//! the experiment driver that scores several classifier families against
//! one shared train/test split.

use serde::{Deserialize, Serialize};

use crate::model::{lookup, ModelError, TrainedModel};
use crate::mlp::TrainingTrace;
use crate::seed::RngSeed;
use crate::split::{stratified_split, SplitError};
use crate::types::{Dataset, Mode};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("actual and predicted label sequences differ in length ({actual} vs {predicted})")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("cannot build a confusion matrix from zero predictions")]
    Empty,
    #[error("no actual {0} rows; recall for it is undefined")]
    EmptyActualClass(Mode),
    #[error("no models requested")]
    NoModels,
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Prediction counts: rows are the actual mode, columns the predicted one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; Mode::COUNT]; Mode::COUNT]);

impl ConfusionMatrix {
    pub fn from_pairs(actual: &[Mode], predicted: &[Mode]) -> Result<ConfusionMatrix, EvalError> {
        if actual.len() != predicted.len() {
            return Err(EvalError::LengthMismatch {
                actual: actual.len(),
                predicted: predicted.len(),
            });
        }
        if actual.is_empty() {
            return Err(EvalError::Empty);
        }
        let mut counts = [[0u64; Mode::COUNT]; Mode::COUNT];
        for (a, p) in actual.iter().zip(predicted) {
            counts[a.index()][p.index()] += 1;
        }
        Ok(ConfusionMatrix(counts))
    }

    pub fn cell(&self, actual: Mode, predicted: Mode) -> u64 {
        self.0[actual.index()][predicted.index()]
    }

    pub fn row_total(&self, actual: Mode) -> u64 {
        self.0[actual.index()].iter().sum()
    }

    pub fn col_total(&self, predicted: Mode) -> u64 {
        self.0.iter().map(|row| row[predicted.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn diagonal(&self) -> u64 {
        (0..Mode::COUNT).map(|c| self.0[c][c]).sum()
    }
}

/// Recall/precision per class and overall accuracy, all as raw (unrounded)
/// percentages. Precision of a never-predicted class is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub recall_pct: [f64; Mode::COUNT],
    pub precision_pct: [Option<f64>; Mode::COUNT],
    pub accuracy_pct: f64,
}

/// Derive recall, precision, and accuracy from a confusion matrix.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsSummary, EvalError> {
    let mut recall = [0.0; Mode::COUNT];
    let mut precision = [None; Mode::COUNT];
    for mode in Mode::ALL {
        let c = mode.index();
        let row = cm.row_total(mode);
        if row == 0 {
            return Err(EvalError::EmptyActualClass(mode));
        }
        recall[c] = 100.0 * cm.0[c][c] as f64 / row as f64;
        let col = cm.col_total(mode);
        if col > 0 {
            precision[c] = Some(100.0 * cm.0[c][c] as f64 / col as f64);
        }
    }
    Ok(MetricsSummary {
        recall_pct: recall,
        precision_pct: precision,
        accuracy_pct: 100.0 * cm.diagonal() as f64 / cm.total() as f64,
    })
}

/// Round a non-negative percentage half-up to 2 decimals (78.125 -> 78.13).
pub fn round2_half_up(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    (x * 100.0 + 0.5).floor() / 100.0
}

/// One classifier to include in an experiment: a registered family name
/// plus optional JSON hyperparameters.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

/// Everything produced for one model within an experiment.
pub struct ModelOutcome {
    pub spec: ModelSpec,
    pub trained: TrainedModel,
    pub trace: Option<TrainingTrace>,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsSummary,
}

/// The shared split plus per-model outcomes of one experiment.
pub struct ExperimentOutcome {
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_class_counts: [usize; Mode::COUNT],
    pub test_class_counts: [usize; Mode::COUNT],
    pub models: Vec<ModelOutcome>,
}

/// Split once, then train and score every requested model on that same
/// split. Model order follows the order of `specs`; each model's training seed is
/// derived from its position and name, so adding a model does not disturb
/// the others.
pub fn run_experiment(
    dataset: &Dataset,
    specs: &[ModelSpec],
    test_fraction: f64,
    seed: RngSeed,
) -> Result<ExperimentOutcome, EvalError> {
    if specs.is_empty() {
        return Err(EvalError::NoModels);
    }
    let (train, test) = stratified_split(dataset, test_fraction, seed.derive("split"))?;
    let actual: Vec<Mode> = test.rows.iter().map(|r| r.mode).collect();

    let mut models = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let strategy = lookup(&spec.name)?;
        let label = format!("train/{i}/{}", spec.name);
        let out = strategy.train_from_json(&train, spec.params.as_ref(), seed.derive(&label))?;
        let predicted: Vec<Mode> = test.rows.iter().map(|r| out.model.predict(&r.values)).collect();
        let confusion = ConfusionMatrix::from_pairs(&actual, &predicted)?;
        models.push(ModelOutcome {
            spec: spec.clone(),
            trained: out.model,
            trace: out.trace,
            confusion,
            metrics: metrics(&confusion)?,
        });
    }
    Ok(ExperimentOutcome {
        train_rows: train.n_rows(),
        test_rows: test.n_rows(),
        train_class_counts: train.class_counts(),
        test_class_counts: test.class_counts(),
        models,
    })
}
