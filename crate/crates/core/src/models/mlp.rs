//! MLP regressors built on the embedding trainer.

use super::{check_query, check_training_data, ModelError, Regressor};
use crate::data::{Matrix, RngSeed, Standardizer};
use crate::embed::{train_mlp, MlpConfig, MlpModel};

/// An MLP trained on z-scored inputs and target; predictions are mapped
/// back to target units.
#[derive(Clone, Debug)]
pub struct MlpRegressor {
    standardizer: Standardizer,
    model: MlpModel,
    descriptor: String,
    pub initial_mse: f64,
    /// Training MSE in standardized target units.
    pub final_mse: f64,
}

impl MlpRegressor {
    pub fn fit(
        features: &Matrix,
        targets: &[f64],
        cfg: &MlpConfig,
        descriptor: &str,
    ) -> Result<Self, ModelError> {
        check_training_data(features, targets, 2)?;
        let standardizer = Standardizer::fit_parts(features, targets)
            .map_err(|e| ModelError::InvalidInput(e.to_string()))?;
        let x = standardizer
            .transform_matrix(features)
            .map_err(|e| ModelError::InvalidInput(e.to_string()))?;
        let y: Vec<f64> = targets.iter().map(|&t| standardizer.transform_target(t)).collect();
        let fit = train_mlp(&x, &y, cfg)?;
        Ok(MlpRegressor {
            standardizer,
            model: fit.model,
            descriptor: descriptor.to_string(),
            initial_mse: fit.initial_mse,
            final_mse: fit.final_mse,
        })
    }
}

/// One hidden layer of width 10, three epochs: underfits by construction.
pub fn fit_shallow_mlp(features: &Matrix, targets: &[f64], seed: RngSeed) -> Result<MlpRegressor, ModelError> {
    let cfg = MlpConfig {
        layer_widths: vec![10],
        epochs: 3,
        seed,
        ..MlpConfig::default()
    };
    MlpRegressor::fit(features, targets, &cfg, "mlp-s")
}

/// Hidden widths `[50, 20, 10]` with the default training budget.
pub fn fit_deep_mlp(features: &Matrix, targets: &[f64], seed: RngSeed) -> Result<MlpRegressor, ModelError> {
    let cfg = MlpConfig {
        seed,
        ..MlpConfig::default()
    };
    MlpRegressor::fit(features, targets, &cfg, "mlp")
}

impl Regressor for MlpRegressor {
    fn descriptor(&self) -> String {
        self.descriptor.clone()
    }

    fn predict(&self, features: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_query(features, self.model.input_dim)?;
        let x = self
            .standardizer
            .transform_matrix(features)
            .map_err(|e| ModelError::InvalidInput(e.to_string()))?;
        let z = self.model.predict(&x)?;
        Ok(z.into_iter().map(|v| self.standardizer.inverse_target(v)).collect())
    }
}
