//! Regressors behind a single black-box prediction contract.
//!
//! The bundled models cover the usual ways a regressor goes wrong: a linear
//! fit and a deep MLP extrapolate under covariate shift, an unbounded tree
//! and a near-noiseless GP interpolate their training noise, and a depth-1
//! tree and a barely-trained MLP underfit. [`ExternalModel`] wraps any
//! program speaking the line protocol described in [`external`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Matrix, RngSeed};
use crate::embed::EmbedError;

pub mod external;
pub mod forest;
pub mod gp;
pub mod linear;
pub mod mlp;
pub mod tree;

pub use external::{ExternalModel, ExternalModelSpec};
pub use forest::{fit_forest, ForestOptions, RandomForest};
pub use gp::{fit_gp, GaussianProcess, GpConfig};
pub use linear::{fit_linear, LinearModel};
pub use mlp::{fit_deep_mlp, fit_shallow_mlp, MlpRegressor};
pub use tree::{fit_tree, RegressionTree, TreeConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error(
        "kernel matrix is not positive definite even with jitter {jitter:e}; \
         increase the noise term (e.g. 1e-6)"
    )]
    Factorization { jitter: f64 },
    #[error("model produced {found} predictions for {expected} rows")]
    PredictionCount { expected: usize, found: usize },
    #[error("model produced a non-finite prediction for row {row}")]
    NonFinitePrediction { row: usize },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("cannot launch `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("external model exited ({status}) while {context}")]
    ProcessExited { status: String, context: String },
    #[error("external model timed out after {timeout_ms} ms while {context}")]
    Timeout { timeout_ms: u128, context: String },
    #[error("malformed response on line {line_no} (`{line}`) while {context}")]
    MalformedResponse {
        line_no: usize,
        line: String,
        context: String,
    },
    #[error("external model reported an error: {0}")]
    Remote(String),
}

/// A fitted model that maps feature rows to predictions.
pub trait Regressor: Send + Sync {
    fn descriptor(&self) -> String;

    /// One finite prediction per input row.
    fn predict(&self, features: &Matrix) -> Result<Vec<f64>, ModelError>;
}

/// Runs `model.predict` and enforces the output contract.
pub fn predict_checked(model: &dyn Regressor, features: &Matrix) -> Result<Vec<f64>, ModelError> {
    let predictions = model.predict(features)?;
    if predictions.len() != features.nrows() {
        return Err(ModelError::PredictionCount {
            expected: features.nrows(),
            found: predictions.len(),
        });
    }
    if let Some(row) = predictions.iter().position(|p| !p.is_finite()) {
        return Err(ModelError::NonFinitePrediction { row });
    }
    Ok(predictions)
}

pub(crate) fn check_training_data(
    features: &Matrix,
    targets: &[f64],
    min_rows: usize,
) -> Result<(), ModelError> {
    if features.nrows() != targets.len() {
        return Err(ModelError::InvalidInput(format!(
            "{} rows but {} targets",
            features.nrows(),
            targets.len()
        )));
    }
    if features.nrows() < min_rows {
        return Err(ModelError::InvalidInput(format!(
            "need at least {min_rows} rows, got {}",
            features.nrows()
        )));
    }
    if !features.is_finite() || targets.iter().any(|t| !t.is_finite()) {
        return Err(ModelError::InvalidInput("non-finite training data".into()));
    }
    Ok(())
}

pub(crate) fn check_query(features: &Matrix, n_features: usize) -> Result<(), ModelError> {
    if features.ncols() != n_features {
        return Err(ModelError::InvalidInput(format!(
            "expected {n_features} features, got {}",
            features.ncols()
        )));
    }
    Ok(())
}

/// Number of trees in the bundled random forest.
pub const FOREST_TREES: usize = 100;
/// Depth of the bundled tree and forest under covariate shift.
pub const SHIFT_TREE_DEPTH: usize = 15;

/// A model constructor: one of the bundled models or an external command.
///
/// Parsed from and displayed as a short name: `lr`, `mlp`, `mlp-s`, `dt-<depth>`,
/// `dt-unbounded`, `rf`, `gp`, or `cmd:<program and args>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    Linear,
    /// `None` grows until leaves are pure.
    Tree { max_depth: Option<usize> },
    Forest { n_trees: usize, max_depth: usize },
    Gp(GpConfig),
    ShallowMlp,
    DeepMlp,
    External(ExternalModelSpec),
}

impl ModelSpec {
    /// Fits the model on `features`/`targets`. External models receive the
    /// training data through the `FIT` command.
    pub fn fit(
        &self,
        features: &Matrix,
        targets: &[f64],
        seed: RngSeed,
    ) -> Result<Box<dyn Regressor>, ModelError> {
        Ok(match self {
            ModelSpec::Linear => Box::new(fit_linear(features, targets)?),
            ModelSpec::Tree { max_depth } => {
                let cfg = match max_depth {
                    Some(d) => TreeConfig::with_depth(*d),
                    None => TreeConfig::unbounded(),
                };
                Box::new(fit_tree(features, targets, &cfg)?)
            }
            ModelSpec::Forest { n_trees, max_depth } => {
                let cfg = TreeConfig {
                    seed,
                    ..TreeConfig::with_depth(*max_depth)
                };
                Box::new(fit_forest(features, targets, &cfg, *n_trees)?)
            }
            ModelSpec::Gp(cfg) => Box::new(fit_gp(features, targets, cfg)?),
            ModelSpec::ShallowMlp => Box::new(fit_shallow_mlp(features, targets, seed)?),
            ModelSpec::DeepMlp => Box::new(fit_deep_mlp(features, targets, seed)?),
            ModelSpec::External(spec) => {
                let model = ExternalModel::spawn(spec)?;
                model.fit(features, targets)?;
                Box::new(model)
            }
        })
    }

    /// Opens a model without fitting; only external models can do this,
    /// since they may already be trained.
    pub fn open_pretrained(&self) -> Result<Box<dyn Regressor>, ModelError> {
        match self {
            ModelSpec::External(spec) => Ok(Box::new(ExternalModel::spawn(spec)?)),
            other => Err(ModelError::InvalidInput(format!(
                "bundled model `{other}` must be fitted on training data"
            ))),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Linear => write!(f, "lr"),
            ModelSpec::Tree { max_depth: None } => write!(f, "dt-unbounded"),
            ModelSpec::Tree { max_depth: Some(d) } => write!(f, "dt-{d}"),
            ModelSpec::Forest { n_trees, max_depth } => {
                if *n_trees == FOREST_TREES && *max_depth == SHIFT_TREE_DEPTH {
                    write!(f, "rf")
                } else {
                    write!(f, "rf-{n_trees}-{max_depth}")
                }
            }
            ModelSpec::Gp(cfg) => {
                if *cfg == GpConfig::default() {
                    write!(f, "gp")
                } else {
                    write!(f, "gp-{}-{}", cfg.length_scale, cfg.noise)
                }
            }
            ModelSpec::ShallowMlp => write!(f, "mlp-s"),
            ModelSpec::DeepMlp => write!(f, "mlp"),
            ModelSpec::External(spec) => write!(f, "cmd:{}", spec.command),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || ModelError::UnknownModel(s.to_string());
        if let Some(command) = s.strip_prefix("cmd:") {
            return Ok(ModelSpec::External(ExternalModelSpec::new(command)?));
        }
        let lower = s.trim().to_ascii_lowercase();
        let parse_num = |t: &str| t.parse::<f64>().map_err(|_| unknown());
        Ok(match lower.as_str() {
            "lr" | "linear" => ModelSpec::Linear,
            "mlp" => ModelSpec::DeepMlp,
            "mlp-s" => ModelSpec::ShallowMlp,
            "rf" => ModelSpec::Forest {
                n_trees: FOREST_TREES,
                max_depth: SHIFT_TREE_DEPTH,
            },
            "gp" => ModelSpec::Gp(GpConfig::default()),
            "dt-unbounded" | "dt-10k" => ModelSpec::Tree { max_depth: None },
            other => {
                if let Some(depth) = other.strip_prefix("dt-") {
                    let d: usize = depth.parse().map_err(|_| unknown())?;
                    if d == 0 {
                        return Err(unknown());
                    }
                    ModelSpec::Tree { max_depth: Some(d) }
                } else if let Some(rest) = other.strip_prefix("rf-") {
                    let (n, d) = rest.split_once('-').ok_or_else(unknown)?;
                    ModelSpec::Forest {
                        n_trees: n.parse().map_err(|_| unknown())?,
                        max_depth: d.parse().map_err(|_| unknown())?,
                    }
                } else if let Some(rest) = other.strip_prefix("gp-") {
                    let (l, noise) = rest.split_once('-').ok_or_else(unknown)?;
                    ModelSpec::Gp(GpConfig {
                        length_scale: parse_num(l)?,
                        noise: parse_num(noise)?,
                    })
                } else {
                    return Err(unknown());
                }
            }
        })
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = ModelError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(spec: ModelSpec) -> String {
        spec.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in ["lr", "mlp", "mlp-s", "dt-1", "dt-15", "dt-unbounded", "rf", "gp", "rf-10-3"] {
            let spec: ModelSpec = name.parse().unwrap();
            assert_eq!(spec.to_string(), name);
        }
        assert_eq!("dt-10k".parse::<ModelSpec>().unwrap(), ModelSpec::Tree { max_depth: None });
        assert!(matches!("dt-0".parse::<ModelSpec>(), Err(ModelError::UnknownModel(_))));
        assert!(matches!("svr".parse::<ModelSpec>(), Err(ModelError::UnknownModel(_))));
        let ext: ModelSpec = "cmd:python3 model.py --fast".parse().unwrap();
        assert_eq!(ext.to_string(), "cmd:python3 model.py --fast");
    }

    struct Broken;
    impl Regressor for Broken {
        fn descriptor(&self) -> String {
            "broken".into()
        }
        fn predict(&self, features: &Matrix) -> Result<Vec<f64>, ModelError> {
            Ok(vec![f64::NAN; features.nrows() + 1])
        }
    }

    #[test]
    fn checked_prediction_enforces_contract() {
        let x = Matrix::zeros(2, 1);
        assert!(matches!(
            predict_checked(&Broken, &x),
            Err(ModelError::PredictionCount { expected: 2, found: 3 })
        ));
    }
}
