//! A small fully-connected neural network trained with ADAM.
//!
//! Architecture: z-scored inputs, `hidden_layers` ReLU layers of
//! `hidden_width` units, and a linear 3-way output read through a softmax.
//! Training is mini-batch gradient descent on the mean cross-entropy, with
//! a stratified validation split carved from the training data to trace
//! generalization per epoch.
//!
//! Standardization statistics come from the gradient-descent portion only
//! and are stored in the model, so prediction takes raw feature rows.
//! All randomness (validation split, weight init, epoch shuffling) derives
//! from one seed through labeled streams.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::RngSeed;
use crate::split::{stratified_split, SplitError};
use crate::types::{Dataset, Mode};

#[derive(Debug, thiserror::Error)]
pub enum MlpError {
    #[error("cannot train on an empty dataset")]
    EmptyTrain,
    #[error("bad dataset shape: {0}")]
    Shape(String),
    #[error("bad training params: {0}")]
    BadParams(String),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("validation split failed: {0}")]
    Validation(#[from] SplitError),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> AdamParams {
        AdamParams { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MlpParams {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Share of the training rows held out (stratified) to trace
    /// validation loss/accuracy; 0 disables validation.
    pub validation_fraction: f64,
    pub adam: AdamParams,
}

impl Default for MlpParams {
    fn default() -> MlpParams {
        MlpParams {
            hidden_layers: 4,
            hidden_width: 15,
            epochs: 200,
            batch_size: 20,
            validation_fraction: 0.2,
            adam: AdamParams::default(),
        }
    }
}

/// One dense layer; weights are row-major `[out_dim x in_dim]`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Layer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Layer {
    fn forward(&self, input: &[f64], relu: bool) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.in_dim);
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let z: f64 = self.biases[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
            out.push(if relu { z.max(0.0) } else { z });
        }
        out
    }
}

/// A trained network plus the standardization it was fit under.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
}

impl MlpModel {
    pub fn n_inputs(&self) -> usize {
        self.input_mean.len()
    }

    fn standardize(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(&self.input_mean)
            .zip(&self.input_sd)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Class logits for a raw (unstandardized) feature row.
    pub fn logits(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.n_inputs(), "feature count mismatch");
        forward(&self.layers, &self.standardize(values))
    }

    pub fn predict(&self, values: &[f64]) -> Mode {
        let logits = self.logits(values);
        assert_eq!(logits.len(), Mode::COUNT);
        let mut best = 0;
        for c in 1..Mode::COUNT {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        Mode::from_index(best).unwrap()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_accuracy: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
}

/// Per-epoch loss/accuracy curves recorded during training.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochStats>,
}

// --- numeric core ---------------------------------------------------------

/// Logits of `x` through the stack (ReLU on all but the last layer).
pub(crate) fn forward(layers: &[Layer], x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        a = layer.forward(&a, l + 1 < layers.len());
    }
    a
}

fn logsumexp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Turn logits into class probabilities (stable against large inputs).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let lse = logsumexp(z);
    z.iter().map(|v| (v - lse).exp()).collect()
}

/// Activations per layer boundary: `[input, hidden_1, ..., logits]`.
fn forward_activations(layers: &[Layer], x: &[f64]) -> Vec<Vec<f64>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    for (l, layer) in layers.iter().enumerate() {
        let a = layer.forward(acts.last().unwrap(), l + 1 < layers.len());
        acts.push(a);
    }
    acts
}

struct LayerGrads {
    w: Vec<f64>,
    b: Vec<f64>,
}

fn zero_grads(layers: &[Layer]) -> Vec<LayerGrads> {
    layers
        .iter()
        .map(|l| LayerGrads { w: vec![0.0; l.weights.len()], b: vec![0.0; l.biases.len()] })
        .collect()
}

/// Add one sample's gradients (of the softmax cross-entropy) into `grads`
/// and return its loss.
fn accumulate_sample(layers: &[Layer], x: &[f64], y: usize, grads: &mut [LayerGrads]) -> f64 {
    let acts = forward_activations(layers, x);
    let logits = acts.last().unwrap();
    let lse = logsumexp(logits);
    let loss = lse - logits[y];

    let mut delta: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    delta[y] -= 1.0;
    for l in (0..layers.len()).rev() {
        let layer = &layers[l];
        let input = &acts[l];
        for o in 0..layer.out_dim {
            grads[l].b[o] += delta[o];
            let row = &mut grads[l].w[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (g, xi) in row.iter_mut().zip(input) {
                *g += delta[o] * xi;
            }
        }
        if l > 0 {
            // ReLU derivative: the stored activation is max(z, 0), so
            // activation > 0 exactly when z > 0.
            let mut prev = vec![0.0; layer.in_dim];
            for (i, p) in prev.iter_mut().enumerate() {
                if input[i] > 0.0 {
                    *p = (0..layer.out_dim)
                        .map(|o| layer.weights[o * layer.in_dim + i] * delta[o])
                        .sum();
                }
            }
            delta = prev;
        }
    }
    loss
}

/// Mean loss and gradients over a batch.
fn batch_gradients(layers: &[Layer], xs: &[&Vec<f64>], ys: &[usize]) -> (f64, Vec<LayerGrads>) {
    let mut grads = zero_grads(layers);
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        loss += accumulate_sample(layers, x, y, &mut grads);
    }
    let scale = 1.0 / xs.len() as f64;
    for g in &mut grads {
        for v in g.w.iter_mut().chain(g.b.iter_mut()) {
            *v *= scale;
        }
    }
    (loss * scale, grads)
}

fn mean_loss(layers: &[Layer], xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let logits = forward(layers, x);
            logsumexp(&logits) - logits[y]
        })
        .sum();
    total / xs.len() as f64
}

fn accuracy(layers: &[Layer], xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let correct = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| {
            let logits = forward(layers, x);
            let mut best = 0;
            for c in 1..logits.len() {
                if logits[c] > logits[best] {
                    best = c;
                }
            }
            best == y
        })
        .count();
    correct as f64 / xs.len() as f64
}

// --- training --------------------------------------------------------------

struct AdamState {
    m: Vec<LayerGrads>,
    v: Vec<LayerGrads>,
    step: u64,
}

fn adam_update(layers: &mut [Layer], grads: &[LayerGrads], state: &mut AdamState, p: &AdamParams) {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - p.beta1.powf(t);
    let bc2 = 1.0 - p.beta2.powf(t);
    for (l, layer) in layers.iter_mut().enumerate() {
        let apply = |theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..theta.len() {
                m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g[i];
                v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= p.learning_rate * m_hat / (v_hat.sqrt() + p.epsilon);
            }
        };
        apply(&mut layer.weights, &grads[l].w, &mut state.m[l].w, &mut state.v[l].w);
        apply(&mut layer.biases, &grads[l].b, &mut state.m[l].b, &mut state.v[l].b);
    }
}

fn validate_params(params: &MlpParams) -> Result<(), MlpError> {
    let bad = |msg: &str| Err(MlpError::BadParams(msg.into()));
    if params.hidden_layers > 0 && params.hidden_width == 0 {
        return bad("hidden_width must be at least 1 when hidden layers exist");
    }
    if params.epochs == 0 {
        return bad("epochs must be at least 1");
    }
    if params.batch_size == 0 {
        return bad("batch_size must be at least 1");
    }
    if !(0.0..1.0).contains(&params.validation_fraction) {
        return bad("validation_fraction must be in [0, 1)");
    }
    let a = &params.adam;
    if !(a.learning_rate.is_finite() && a.learning_rate > 0.0) {
        return bad("learning_rate must be positive");
    }
    if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
        return bad("beta1 and beta2 must be in [0, 1)");
    }
    if !(a.epsilon.is_finite() && a.epsilon > 0.0) {
        return bad("epsilon must be positive");
    }
    Ok(())
}

/// He-uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)) weights, zero biases.
fn init_layers(p: usize, params: &MlpParams, rng: &mut impl Rng) -> Vec<Layer> {
    let mut dims = vec![p];
    dims.extend(std::iter::repeat(params.hidden_width).take(params.hidden_layers));
    dims.push(Mode::COUNT);
    dims.windows(2)
        .map(|d| {
            let (in_dim, out_dim) = (d[0], d[1]);
            let limit = (6.0 / in_dim as f64).sqrt();
            Layer {
                weights: (0..in_dim * out_dim)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect(),
                biases: vec![0.0; out_dim],
                in_dim,
                out_dim,
            }
        })
        .collect()
}

/// The untrained network `train_mlp` would start from for `n_features`
/// inputs under the same seed: freshly initialized weights and pass-through
/// standardization (mean 0, scale 1).
pub fn init_mlp(n_features: usize, params: &MlpParams, seed: RngSeed) -> Result<MlpModel, MlpError> {
    validate_params(params)?;
    if n_features == 0 {
        return Err(MlpError::BadParams("the network needs at least one input".into()));
    }
    Ok(MlpModel {
        layers: init_layers(n_features, params, &mut seed.derive("init").rng()),
        input_mean: vec![0.0; n_features],
        input_sd: vec![1.0; n_features],
    })
}

fn standardized_rows(ds: &Dataset, mean: &[f64], sd: &[f64]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let xs = ds
        .rows
        .iter()
        .map(|r| {
            r.values
                .iter()
                .zip(mean)
                .zip(sd)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let ys = ds.rows.iter().map(|r| r.mode.index()).collect();
    (xs, ys)
}

/// Train a network on raw feature rows.
///
/// Returns the model (with its standardization baked in) and the per-epoch
/// training trace.
pub fn train_mlp(
    train: &Dataset,
    params: &MlpParams,
    seed: RngSeed,
) -> Result<(MlpModel, TrainingTrace), MlpError> {
    train.check_rectangular().map_err(MlpError::Shape)?;
    if train.n_rows() == 0 {
        return Err(MlpError::EmptyTrain);
    }
    validate_params(params)?;

    let (sgd_ds, val_ds) = if params.validation_fraction > 0.0 {
        let (s, v) = stratified_split(train, params.validation_fraction, seed.derive("validation"))?;
        (s, Some(v))
    } else {
        (train.clone(), None)
    };

    // Standardization from the gradient-descent portion; constant features
    // pass through unscaled.
    let p = sgd_ds.n_features();
    let n = sgd_ds.n_rows() as f64;
    let mut mean = vec![0.0; p];
    for row in &sgd_ds.rows {
        for (m, v) in mean.iter_mut().zip(&row.values) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut sd = vec![0.0; p];
    for row in &sgd_ds.rows {
        for (s, (v, m)) in sd.iter_mut().zip(row.values.iter().zip(&mean)) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for (s, m) in sd.iter_mut().zip(&mean) {
        // a constant column's variance is pure rounding noise; leave such
        // features unscaled instead of dividing by a near-zero deviation
        let tolerance = 1e-12 * m.abs().max(1.0);
        *s = if s.sqrt() > tolerance { s.sqrt() } else { 1.0 };
    }

    let (xs, ys) = standardized_rows(&sgd_ds, &mean, &sd);
    let val = val_ds.map(|v| standardized_rows(&v, &mean, &sd));

    let mut layers = init_layers(p, params, &mut seed.derive("init").rng());

    let mut adam = AdamState { m: zero_grads(&layers), v: zero_grads(&layers), step: 0 };
    let mut shuffle_rng = seed.derive("shuffle").rng();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut trace = TrainingTrace::default();

    for epoch in 1..=params.epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, chunk) in order.chunks(params.batch_size).enumerate() {
            let batch_x: Vec<&Vec<f64>> = chunk.iter().map(|&i| &xs[i]).collect();
            let batch_y: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let (loss, grads) = batch_gradients(&layers, &batch_x, &batch_y);
            if !loss.is_finite() {
                return Err(MlpError::NonFiniteLoss { epoch, batch: b + 1 });
            }
            adam_update(&mut layers, &grads, &mut adam, &params.adam);
        }
        let (val_accuracy, val_loss) = match &val {
            Some((vx, vy)) => (Some(accuracy(&layers, vx, vy)), Some(mean_loss(&layers, vx, vy))),
            None => (None, None),
        };
        trace.epochs.push(EpochStats {
            epoch,
            train_accuracy: accuracy(&layers, &xs, &ys),
            train_loss: mean_loss(&layers, &xs, &ys),
            val_accuracy,
            val_loss,
        });
    }

    Ok((MlpModel { layers, input_mean: mean, input_sd: sd }, trace))
}

/// Compare analytic gradients against central differences on one batch of
/// network-space inputs; returns the worst relative error over all
/// parameters.
pub fn gradient_check(model: &MlpModel, inputs: &[Vec<f64>], labels: &[Mode], h: f64) -> f64 {
    assert!(!inputs.is_empty());
    let ys: Vec<usize> = labels.iter().map(|m| m.index()).collect();
    let xs: Vec<&Vec<f64>> = inputs.iter().collect();
    let mut layers = model.layers.clone();
    let (_, grads) = batch_gradients(&layers, &xs, &ys);

    let mut worst = 0.0f64;
    for l in 0..layers.len() {
        for (kind, count) in [(0, layers[l].weights.len()), (1, layers[l].biases.len())] {
            for i in 0..count {
                let read = |layers: &mut Vec<Layer>, delta: f64| -> f64 {
                    let slot = if kind == 0 {
                        &mut layers[l].weights[i]
                    } else {
                        &mut layers[l].biases[i]
                    };
                    let old = *slot;
                    *slot = old + delta;
                    let inputs_owned: Vec<Vec<f64>> = xs.iter().map(|x| (*x).clone()).collect();
                    let loss = mean_loss(layers, &inputs_owned, &ys);
                    if kind == 0 {
                        layers[l].weights[i] = old;
                    } else {
                        layers[l].biases[i] = old;
                    }
                    loss
                };
                let plus = read(&mut layers, h);
                let minus = read(&mut layers, -h);
                let numeric = (plus - minus) / (2.0 * h);
                let analytic = if kind == 0 { grads[l].w[i] } else { grads[l].b[i] };
                let rel = (analytic - numeric).abs()
                    / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
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

    fn blobs(seed: u64, n_per_class: usize) -> Dataset {
        let mut rng = RngSeed::new(seed).rng();
        let mut rows = Vec::new();
        for mode in Mode::ALL {
            let center = (mode.index() as f64 * 2.2, (mode.index() as f64 * 1.3) - 1.0);
            for _ in 0..n_per_class {
                let x = center.0 + 0.4 * rng.random::<f64>();
                let y = center.1 + 0.4 * rng.random::<f64>();
                rows.push((vec![x, y], mode));
            }
        }
        dataset(rows)
    }

    fn quick_params() -> MlpParams {
        MlpParams {
            hidden_layers: 2,
            hidden_width: 8,
            epochs: 60,
            batch_size: 10,
            validation_fraction: 0.2,
            ..MlpParams::default()
        }
    }

    #[test]
    fn forward_matches_hand_softmax() {
        // 1 -> 1 (ReLU) -> 2: x=0.8, w1=0.5, b1=0.1 gives a=0.5; output
        // logits 0.2 and 0.0, so softmax is the logistic of 0.2.
        let layers = vec![
            Layer { weights: vec![0.5], biases: vec![0.1], in_dim: 1, out_dim: 1 },
            Layer { weights: vec![0.3, -0.2], biases: vec![0.05, 0.1], in_dim: 1, out_dim: 2 },
        ];
        let logits = forward(&layers, &[0.8]);
        assert!((logits[0] - 0.2).abs() < 1e-15);
        assert!((logits[1] - 0.0).abs() < 1e-15);
        let probs = softmax(&logits);
        assert!((probs[0] - 0.549833997312478).abs() < 1e-12);
        assert!((probs[1] - 0.450166002687522).abs() < 1e-12);
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn relu_clamps_hidden_activations() {
        let layers = vec![
            Layer { weights: vec![1.0], biases: vec![0.0], in_dim: 1, out_dim: 1 },
            Layer { weights: vec![1.0, -1.0], biases: vec![0.0, 0.0], in_dim: 1, out_dim: 2 },
        ];
        assert_eq!(forward(&layers, &[-3.0]), vec![0.0, 0.0], "negative input clamps to 0");
        assert_eq!(forward(&layers, &[2.0]), vec![2.0, -2.0]);
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let ds = blobs(31, 8);
        let (model, _) = train_mlp(
            &ds,
            &MlpParams { epochs: 2, ..quick_params() },
            RngSeed::new(5),
        )
        .unwrap();
        let mut rng = RngSeed::new(77).rng();
        let inputs: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..2).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let labels = vec![
            Mode::Walking,
            Mode::Biking,
            Mode::Driving,
            Mode::Walking,
            Mode::Driving,
            Mode::Biking,
        ];
        let worst = gradient_check(&model, &inputs, &labels, 1e-5);
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    #[test]
    fn separable_blobs_are_learned() {
        let ds = blobs(3, 20);
        let (model, trace) = train_mlp(&ds, &quick_params(), RngSeed::new(9)).unwrap();
        let correct = ds
            .rows
            .iter()
            .filter(|r| model.predict(&r.values) == r.mode)
            .count();
        assert!(correct as f64 / ds.n_rows() as f64 > 0.95, "{correct}/{}", ds.n_rows());
        let last = trace.epochs.last().unwrap();
        let first = &trace.epochs[0];
        assert!(last.train_loss < first.train_loss, "loss should fall");
    }

    #[test]
    fn trace_shape_follows_the_config() {
        let ds = blobs(11, 10);
        let params = MlpParams { epochs: 5, ..quick_params() };
        let (_, trace) = train_mlp(&ds, &params, RngSeed::new(2)).unwrap();
        assert_eq!(trace.epochs.len(), 5);
        for (i, e) in trace.epochs.iter().enumerate() {
            assert_eq!(e.epoch, i + 1);
            assert!((0.0..=1.0).contains(&e.train_accuracy));
            assert!(e.train_loss >= 0.0);
            assert!(e.val_accuracy.is_some());
            assert!(e.val_loss.is_some());
        }

        let no_val = MlpParams { validation_fraction: 0.0, epochs: 3, ..quick_params() };
        let (_, trace) = train_mlp(&ds, &no_val, RngSeed::new(2)).unwrap();
        assert!(trace.epochs.iter().all(|e| e.val_accuracy.is_none() && e.val_loss.is_none()));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let ds = blobs(19, 12);
        let params = MlpParams { epochs: 4, ..quick_params() };
        let (a, ta) = train_mlp(&ds, &params, RngSeed::new(33)).unwrap();
        let (b, tb) = train_mlp(&ds, &params, RngSeed::new(33)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = train_mlp(&ds, &params, RngSeed::new(34)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn constant_features_standardize_safely() {
        let mut ds = blobs(7, 8);
        for row in &mut ds.rows {
            row.values.push(5.0);
        }
        ds.feature_names = Dataset::standard_names(3);
        let params = MlpParams { epochs: 2, ..quick_params() };
        let (model, _) = train_mlp(&ds, &params, RngSeed::new(4)).unwrap();
        assert_eq!(model.input_sd[2], 1.0, "constant feature keeps unit scale");
        assert_eq!(model.input_mean[2], 5.0);
        assert!(model.logits(&[0.0, 0.0, 5.0]).iter().all(|z| z.is_finite()));
    }

    #[test]
    fn runaway_learning_rates_error_instead_of_emitting_nan() {
        // each optimizer step moves weights by about the learning rate, so a
        // rate this size overflows the next forward pass; no hidden layers,
        // because dead ReLU units would otherwise gate the blow-up
        let ds = blobs(5, 10);
        let params = MlpParams {
            hidden_layers: 0,
            adam: AdamParams { learning_rate: 1e308, ..AdamParams::default() },
            epochs: 5,
            ..quick_params()
        };
        match train_mlp(&ds, &params, RngSeed::new(6)) {
            Err(MlpError::NonFiniteLoss { epoch, batch }) => {
                assert!(epoch >= 1 && batch >= 1);
            }
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn init_model_matches_what_training_starts_from() {
        let params = MlpParams { validation_fraction: 0.0, epochs: 1, ..quick_params() };
        let seed = RngSeed::new(21);
        let init = init_mlp(2, &params, seed).unwrap();
        assert_eq!(init, init_mlp(2, &params, seed).unwrap());
        assert_eq!(init.layers.len(), params.hidden_layers + 1);
        assert!(init.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        let limit = (6.0f64 / 2.0).sqrt();
        assert!(init.layers[0].weights.iter().all(|w| w.abs() < limit));

        // with a vanishingly small learning rate every update is absorbed
        // below the weights' precision, so one epoch of training returns the
        // init weights bit-for-bit
        let tiny = MlpParams {
            adam: AdamParams { learning_rate: 1e-300, ..AdamParams::default() },
            ..params.clone()
        };
        let (trained, _) = train_mlp(&blobs(13, 8), &tiny, seed).unwrap();
        for (a, b) in init.layers.iter().zip(&trained.layers) {
            assert_eq!(a.weights, b.weights);
        }

        assert!(matches!(init_mlp(0, &params, seed), Err(MlpError::BadParams(_))));
    }

    #[test]
    fn parameter_validation_catches_nonsense() {
        let ds = blobs(1, 6);
        let cases: Vec<MlpParams> = vec![
            MlpParams { epochs: 0, ..quick_params() },
            MlpParams { batch_size: 0, ..quick_params() },
            MlpParams { hidden_width: 0, ..quick_params() },
            MlpParams { validation_fraction: 1.0, ..quick_params() },
            MlpParams {
                adam: AdamParams { learning_rate: -1.0, ..AdamParams::default() },
                ..quick_params()
            },
            MlpParams {
                adam: AdamParams { beta1: 1.0, ..AdamParams::default() },
                ..quick_params()
            },
        ];
        for params in cases {
            assert!(
                matches!(train_mlp(&ds, &params, RngSeed::new(1)), Err(MlpError::BadParams(_))),
                "params should be rejected: {params:?}"
            );
        }
    }

    #[test]
    fn models_round_trip_through_json() {
        let ds = blobs(23, 8);
        let params = MlpParams { epochs: 2, ..quick_params() };
        let (model, _) = train_mlp(&ds, &params, RngSeed::new(12)).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: MlpModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        for row in &ds.rows {
            assert_eq!(model.predict(&row.values), back.predict(&row.values));
        }
    }

    #[test]
    fn zero_hidden_layers_degrades_to_softmax_regression() {
        let ds = blobs(29, 15);
        // few rows means few optimizer steps, and each step moves at most
        // ~learning_rate, so the toy setup needs a larger rate than production
        let params = MlpParams {
            hidden_layers: 0,
            epochs: 80,
            batch_size: 10,
            validation_fraction: 0.0,
            adam: AdamParams { learning_rate: 0.05, ..AdamParams::default() },
            ..MlpParams::default()
        };
        let (model, _) = train_mlp(&ds, &params, RngSeed::new(8)).unwrap();
        assert_eq!(model.layers.len(), 1);
        let correct = ds
            .rows
            .iter()
            .filter(|r| model.predict(&r.values) == r.mode)
            .count();
        assert!(correct as f64 / ds.n_rows() as f64 > 0.9);
    }
}
