//! Bagged regression trees.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::FeatureSampler;
use super::{check_query, check_training_data, ModelError, Regressor, RegressionTree, TreeConfig};
use crate::data::Matrix;

/// Knobs beyond [`TreeConfig`]; the defaults are what [`fit_forest`] uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    pub bootstrap: bool,
    /// Features tried per split; `None` means `ceil(D / 3)`.
    pub max_features: Option<usize>,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            bootstrap: true,
            max_features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

pub fn fit_forest(
    features: &Matrix,
    targets: &[f64],
    cfg: &TreeConfig,
    n_trees: usize,
) -> Result<RandomForest, ModelError> {
    RandomForest::fit_with(features, targets, cfg, n_trees, &ForestOptions::default())
}

impl RandomForest {
    pub fn fit_with(
        features: &Matrix,
        targets: &[f64],
        cfg: &TreeConfig,
        n_trees: usize,
        options: &ForestOptions,
    ) -> Result<RandomForest, ModelError> {
        check_training_data(features, targets, 2)?;
        cfg.validate()?;
        if n_trees == 0 {
            return Err(ModelError::InvalidInput("a forest needs at least one tree".into()));
        }
        let n = targets.len();
        let d = features.ncols();
        let per_split = options.max_features.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1));
        let trees = (0..n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = cfg.seed.derive(t as u64).rng();
                let samples: Vec<usize> = if options.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let sampler = FeatureSampler {
                    per_split,
                    rng: &mut rng,
                };
                RegressionTree::grow(features, targets, samples, cfg, Some(sampler))
            })
            .collect();
        Ok(RandomForest {
            trees,
            n_features: d,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl Regressor for RandomForest {
    fn descriptor(&self) -> String {
        format!("rf-{}", self.trees.len())
    }

    fn predict(&self, features: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_query(features, self.n_features)?;
        let k = self.trees.len() as f64;
        Ok(features
            .rows()
            .map(|r| self.trees.iter().map(|t| t.predict_row(r)).sum::<f64>() / k)
            .collect())
    }
}
