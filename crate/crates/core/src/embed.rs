//! Small feed-forward regression network whose last hidden layer serves as a
//! low-dimensional embedding of the input space.
//!
//! Hidden layers use the rectifier, the output is a single linear unit, and
//! training is plain mini-batch gradient descent on mean squared error.
//! Initialization and batch order come from the configured seed, so identical
//! data and configuration give bit-identical weights.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Matrix, RngSeed};

/// Finite-difference step used by [`gradient_check`].
pub const GRADIENT_CHECK_STEP: f64 = 1e-5;

/// Gradient magnitudes below this are compared absolutely rather than
/// relatively in [`gradient_check`].
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training loss became non-finite in epoch {epoch}; lower the learning rate")]
    NonFiniteLoss { epoch: usize },
}

fn default_widths() -> Vec<usize> {
    vec![50, 20, 10]
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    200
}
fn default_batch_size() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    /// Hidden layer widths; the last one is the embedding dimensionality.
    #[serde(default = "default_widths")]
    pub layer_widths: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: RngSeed,
    #[serde(default)]
    pub l2_penalty: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            layer_widths: default_widths(),
            learning_rate: default_learning_rate(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            seed: RngSeed::default(),
            l2_penalty: 0.0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |msg: &str| Err(EmbedError::InvalidConfig(msg.to_string()));
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return bad("hidden layer widths must be a non-empty list of positive integers");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad("l2_penalty must be non-negative");
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.layer_widths.last().copied().unwrap_or(0)
    }
}

fn default_threshold_dims() -> usize {
    15
}
fn default_target_dims() -> usize {
    10
}

/// When and how to reduce dimensionality before neighbor search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    /// An embedder is trained only when the feature count exceeds this.
    #[serde(default = "default_threshold_dims")]
    pub threshold_dims: usize,
    #[serde(default = "default_target_dims")]
    pub target_dims: usize,
    #[serde(default)]
    pub mlp: MlpConfig,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            threshold_dims: default_threshold_dims(),
            target_dims: default_target_dims(),
            mlp: MlpConfig::default(),
        }
    }
}

impl EmbeddingSpec {
    pub fn validate(&self) -> Result<(), EmbedError> {
        self.mlp.validate()?;
        if self.threshold_dims == 0 || self.target_dims == 0 {
            return Err(EmbedError::InvalidConfig(
                "threshold_dims and target_dims must be positive".into(),
            ));
        }
        if self.mlp.embedding_dim() != self.target_dims {
            return Err(EmbedError::InvalidConfig(format!(
                "target_dims {} differs from the last hidden width {}",
                self.target_dims,
                self.mlp.embedding_dim()
            )));
        }
        Ok(())
    }

    pub fn applies_to(&self, n_features: usize) -> bool {
        n_features > self.threshold_dims
    }
}

/// One affine layer; `weights` is `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl Layer {
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .rows()
                .zip(&self.biases)
                .map(|(w, b)| w.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b),
        );
    }

    fn n_params(&self) -> usize {
        self.weights.as_slice().len() + self.biases.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Hidden layers followed by the scalar output layer.
    pub layers: Vec<Layer>,
    pub config: MlpConfig,
    pub input_dim: usize,
}

/// A trained network along with its training loss before and after.
#[derive(Clone, Debug)]
pub struct MlpFit {
    pub model: MlpModel,
    pub initial_mse: f64,
    pub final_mse: f64,
}

/// Per-parameter loss gradients, shaped like [`MlpModel::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.weights.nrows(), l.weights.ncols()),
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.as_slice().iter().chain(&l.biases).copied())
        .collect()
}

/// Activations recorded by a forward pass, for backpropagation.
struct Trace {
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases drawn from `config.seed`.
    pub fn init(input_dim: usize, config: &MlpConfig) -> Result<Self, EmbedError> {
        config.validate()?;
        if input_dim == 0 {
            return Err(EmbedError::InvalidConfig("input dimension must be positive".into()));
        }
        let mut rng = config.seed.rng();
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(config.layer_widths.len() + 1);
        for &fan_out in config.layer_widths.iter().chain(std::iter::once(&1)) {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(Layer {
                weights: Matrix::from_vec(fan_out, fan_in, data),
                biases: vec![0.0; fan_out],
            });
            fan_in = fan_out;
        }
        Ok(MlpModel {
            layers,
            config: config.clone(),
            input_dim,
        })
    }

    /// Checks that the layer shapes chain from `input_dim` to a scalar.
    pub fn validate(&self) -> Result<(), EmbedError> {
        let mut fan_in = self.input_dim;
        for layer in &self.layers {
            if layer.weights.ncols() != fan_in || layer.biases.len() != layer.weights.nrows() {
                return Err(EmbedError::InvalidConfig("layer shapes do not chain".into()));
            }
            fan_in = layer.weights.nrows();
        }
        if fan_in != 1 || self.layers.len() < 2 {
            return Err(EmbedError::InvalidConfig(
                "network must end in a scalar output after at least one hidden layer".into(),
            ));
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers[self.layers.len() - 2].biases.len()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::new();
            layer.affine(&activations[l], &mut out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(out);
        }
        Trace { activations }
    }

    fn check_input(&self, len: usize) -> Result<(), EmbedError> {
        if len != self.input_dim {
            return Err(EmbedError::DimensionMismatch {
                expected: self.input_dim,
                found: len,
            });
        }
        Ok(())
    }

    /// Returns the scalar prediction and the last hidden layer's activations.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, Vec<f64>), EmbedError> {
        self.check_input(x.len())?;
        let mut trace = self.trace(x);
        let output = trace.activations.pop().expect("output layer")[0];
        let penultimate = trace.activations.pop().expect("hidden layer");
        Ok((output, penultimate))
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<f64>, EmbedError> {
        self.check_input(features.ncols())?;
        features
            .rows()
            .map(|row| self.forward(row).map(|(y, _)| y))
            .collect()
    }

    /// Row `i` of the result is the penultimate activation vector of row `i`.
    pub fn embed_matrix(&self, features: &Matrix) -> Result<Matrix, EmbedError> {
        self.check_input(features.ncols())?;
        let d = self.embedding_dim();
        let mut out = Matrix::zeros(features.nrows(), d);
        for (i, row) in features.rows().enumerate() {
            let (_, emb) = self.forward(row)?;
            out.row_mut(i).copy_from_slice(&emb);
        }
        Ok(out)
    }

    /// Adds the gradient of `scale * (prediction - y)^2` for one sample into `grads`.
    fn accumulate_gradients(&self, x: &[f64], y: f64, scale: f64, grads: &mut Gradients) -> f64 {
        let trace = self.trace(x);
        let acts = &trace.activations;
        let prediction = acts[acts.len() - 1][0];
        let residual = prediction - y;
        let mut delta = vec![2.0 * residual * scale];
        for l in (0..self.layers.len()).rev() {
            let input = &acts[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                for (gw, &a) in g.weights.row_mut(o).iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let weights = &self.layers[l].weights;
            delta = (0..weights.ncols())
                .map(|j| {
                    // input[j] is the rectified output of layer l - 1
                    if input[j] > 0.0 {
                        delta
                            .iter()
                            .enumerate()
                            .map(|(o, d)| d * weights.get(o, j))
                            .sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        residual * residual
    }

    /// Analytic gradient of the single-sample loss `(prediction - y)^2`.
    pub fn loss_gradients(&self, x: &[f64], y: f64) -> Result<Gradients, EmbedError> {
        self.check_input(x.len())?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_gradients(x, y, 1.0, &mut grads);
        Ok(grads)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| {
            l.weights
                .as_mut_slice()
                .iter_mut()
                .chain(l.biases.iter_mut())
        })
    }

    /// Parameter `k` in [`flatten_layers`] order.
    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weights.as_slice().len();
            if k < nw {
                return &mut layer.weights.as_mut_slice()[k];
            }
            k -= nw;
            if k < layer.biases.len() {
                return &mut layer.biases[k];
            }
            k -= layer.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn mse(&self, features: &Matrix, targets: &[f64]) -> f64 {
        let total: f64 = features
            .rows()
            .zip(targets)
            .map(|(x, y)| {
                let r = self.trace(x).activations.last().expect("output")[0] - y;
                r * r
            })
            .sum();
        total / targets.len() as f64
    }
}

/// Trains a network by mini-batch gradient descent on mean squared error.
///
/// Inputs are expected to be standardized by the caller.
pub fn train_mlp(features: &Matrix, targets: &[f64], cfg: &MlpConfig) -> Result<MlpFit, EmbedError> {
    cfg.validate()?;
    let n = features.nrows();
    if targets.len() != n {
        return Err(EmbedError::DimensionMismatch {
            expected: n,
            found: targets.len(),
        });
    }
    if n < 2 {
        return Err(EmbedError::TooFewRows(n));
    }
    let mut model = MlpModel::init(features.ncols(), cfg)?;
    let initial_mse = model.mse(features, targets);

    let mut rng = cfg.seed.derive(1).rng();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = Gradients::zeros_like(&model);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.layers.iter_mut().for_each(zero);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += model.accumulate_gradients(features.row(i), targets[i], scale, &mut grads);
            }
            let flat = grads.flatten();
            let lr = cfg.learning_rate;
            let l2 = cfg.l2_penalty;
            for (p, g) in model.params_mut().zip(flat) {
                *p -= lr * (g + 2.0 * l2 * *p);
            }
        }
        if !epoch_loss.is_finite() {
            return Err(EmbedError::NonFiniteLoss { epoch });
        }
    }
    let final_mse = model.mse(features, targets);
    if !final_mse.is_finite() {
        return Err(EmbedError::NonFiniteLoss { epoch: cfg.epochs });
    }
    Ok(MlpFit {
        model,
        initial_mse,
        final_mse,
    })
}

fn zero(layer: &mut Layer) {
    layer.weights.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
    layer.biases.iter_mut().for_each(|v| *v = 0.0);
}

/// Largest relative deviation between analytic gradients of
/// `(prediction - y)^2` and central finite differences over every parameter.
pub fn gradient_check(model: &MlpModel, x: &[f64], y: f64) -> Result<f64, EmbedError> {
    let analytic = model.loss_gradients(x, y)?.flatten();
    let loss = |m: &MlpModel| {
        let r = m.trace(x).activations.last().expect("output")[0] - y;
        r * r
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (k, a) in analytic.into_iter().enumerate() {
        let original = *probe.param_mut(k);
        *probe.param_mut(k) = original + GRADIENT_CHECK_STEP;
        let up = loss(&probe);
        *probe.param_mut(k) = original - GRADIENT_CHECK_STEP;
        let down = loss(&probe);
        *probe.param_mut(k) = original;
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let scale = a.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / scale);
    }
    Ok(worst)
}
