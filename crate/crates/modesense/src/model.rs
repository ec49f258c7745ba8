//! Uniform interface over the four classifier families.
//!
//! Each family implements [`ModelStrategy`] and registers under a short
//! name (`dt`, `bdt`, `rf`, `mlp`), so callers pick a model at runtime by
//! string, hand over JSON hyperparameters, and get back a [`TrainedModel`]
//! that predicts and serializes the same way regardless of family.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensemble::{train_bagged, train_forest, BaggingParams, Forest, ForestParams};
use crate::mlp::{train_mlp, MlpError, MlpModel, MlpParams, TrainingTrace};
use crate::seed::RngSeed;
use crate::tree::{train_tree, FeatureSampling, Tree, TreeError, TreeParams};
use crate::types::{Dataset, Mode};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("unknown model '{0}', expected one of: dt, bdt, rf, mlp")]
    Unknown(String),
    #[error("bad params for model '{name}': {message}")]
    BadParams { name: &'static str, message: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

/// A fitted classifier of any family, ready to predict or serialize.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Dt { tree: Tree },
    Bdt { forest: Forest },
    Rf { forest: Forest },
    Mlp { model: MlpModel },
}

impl TrainedModel {
    pub fn kind(&self) -> &'static str {
        match self {
            TrainedModel::Dt { .. } => "dt",
            TrainedModel::Bdt { .. } => "bdt",
            TrainedModel::Rf { .. } => "rf",
            TrainedModel::Mlp { .. } => "mlp",
        }
    }

    pub fn predict(&self, values: &[f64]) -> Mode {
        match self {
            TrainedModel::Dt { tree } => tree.predict(values),
            TrainedModel::Bdt { forest } | TrainedModel::Rf { forest } => forest.predict(values),
            TrainedModel::Mlp { model } => model.predict(values),
        }
    }

    /// How many features a row must have for [`Self::predict`].
    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Dt { tree } => tree.n_features,
            TrainedModel::Bdt { forest } | TrainedModel::Rf { forest } => forest.n_features,
            TrainedModel::Mlp { model } => model.n_inputs(),
        }
    }
}

/// Training result: the fitted model, plus epoch curves for families that
/// produce them.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: TrainedModel,
    pub trace: Option<TrainingTrace>,
}

/// One classifier family registered by name.
pub trait ModelStrategy: Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// Check JSON hyperparameters without training (schema and types).
    fn validate_params(&self, params: Option<&serde_json::Value>) -> Result<(), ModelError>;
    /// Train with JSON hyperparameters (`None` means family defaults).
    fn train_from_json(
        &self,
        train: &Dataset,
        params: Option<&serde_json::Value>,
        seed: RngSeed,
    ) -> Result<TrainOutput, ModelError>;
}

fn parse_params<T: DeserializeOwned + Default>(
    name: &'static str,
    params: Option<&serde_json::Value>,
) -> Result<T, ModelError> {
    match params {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| ModelError::BadParams { name, message: e.to_string() }),
    }
}

struct DtStrategy;

impl ModelStrategy for DtStrategy {
    fn name(&self) -> &'static str {
        "dt"
    }
    fn summary(&self) -> &'static str {
        "single decision tree"
    }
    fn validate_params(&self, params: Option<&serde_json::Value>) -> Result<(), ModelError> {
        parse_params::<TreeParams>(self.name(), params).map(|_| ())
    }
    fn train_from_json(
        &self,
        train: &Dataset,
        params: Option<&serde_json::Value>,
        seed: RngSeed,
    ) -> Result<TrainOutput, ModelError> {
        let params: TreeParams = parse_params(self.name(), params)?;
        let _ = seed; // a lone tree trains deterministically
        let tree = train_tree(train, &params, FeatureSampling::All)?;
        Ok(TrainOutput { model: TrainedModel::Dt { tree }, trace: None })
    }
}

struct BdtStrategy;

impl ModelStrategy for BdtStrategy {
    fn name(&self) -> &'static str {
        "bdt"
    }
    fn summary(&self) -> &'static str {
        "bagged decision trees"
    }
    fn validate_params(&self, params: Option<&serde_json::Value>) -> Result<(), ModelError> {
        parse_params::<BaggingParams>(self.name(), params).map(|_| ())
    }
    fn train_from_json(
        &self,
        train: &Dataset,
        params: Option<&serde_json::Value>,
        seed: RngSeed,
    ) -> Result<TrainOutput, ModelError> {
        let params: BaggingParams = parse_params(self.name(), params)?;
        let forest = train_bagged(train, &params, seed)?;
        Ok(TrainOutput { model: TrainedModel::Bdt { forest }, trace: None })
    }
}

struct RfStrategy;

impl ModelStrategy for RfStrategy {
    fn name(&self) -> &'static str {
        "rf"
    }
    fn summary(&self) -> &'static str {
        "random forest"
    }
    fn validate_params(&self, params: Option<&serde_json::Value>) -> Result<(), ModelError> {
        parse_params::<ForestParams>(self.name(), params).map(|_| ())
    }
    fn train_from_json(
        &self,
        train: &Dataset,
        params: Option<&serde_json::Value>,
        seed: RngSeed,
    ) -> Result<TrainOutput, ModelError> {
        let params: ForestParams = parse_params(self.name(), params)?;
        let forest = train_forest(train, &params, seed)?;
        Ok(TrainOutput { model: TrainedModel::Rf { forest }, trace: None })
    }
}

struct MlpStrategy;

impl ModelStrategy for MlpStrategy {
    fn name(&self) -> &'static str {
        "mlp"
    }
    fn summary(&self) -> &'static str {
        "multilayer perceptron"
    }
    fn validate_params(&self, params: Option<&serde_json::Value>) -> Result<(), ModelError> {
        parse_params::<MlpParams>(self.name(), params).map(|_| ())
    }
    fn train_from_json(
        &self,
        train: &Dataset,
        params: Option<&serde_json::Value>,
        seed: RngSeed,
    ) -> Result<TrainOutput, ModelError> {
        let params: MlpParams = parse_params(self.name(), params)?;
        let (model, trace) = train_mlp(train, &params, seed)?;
        Ok(TrainOutput { model: TrainedModel::Mlp { model }, trace: Some(trace) })
    }
}

static REGISTRY: [&dyn ModelStrategy; 4] = [&DtStrategy, &BdtStrategy, &RfStrategy, &MlpStrategy];

/// All registered classifier families, in canonical order.
pub fn registry() -> &'static [&'static dyn ModelStrategy] {
    &REGISTRY
}

/// Find a family by its registered name.
pub fn lookup(name: &str) -> Result<&'static dyn ModelStrategy, ModelError> {
    REGISTRY
        .iter()
        .find(|s| s.name() == name)
        .copied()
        .ok_or_else(|| ModelError::Unknown(name.to_string()))
}
