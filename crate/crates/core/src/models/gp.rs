//! Gaussian-process regression mean with an RBF kernel and zero prior mean.

use serde::{Deserialize, Serialize};

use super::{check_query, check_training_data, ModelError, Regressor};
use crate::data::Matrix;
use crate::linalg::Cholesky;

/// Largest training set accepted by the dense solve.
pub const MAX_GP_ROWS: usize = 5000;

/// Diagonal jitter tried, in order, after the configured noise fails.
pub const JITTER_LADDER: [f64; 2] = [1e-6, 1e-4];

fn default_length_scale() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    #[serde(default = "default_length_scale")]
    pub length_scale: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            length_scale: default_length_scale(),
            noise: default_noise(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianProcess {
    train: Matrix,
    /// `(K + jitter I)^{-1} y`
    weights: Vec<f64>,
    length_scale: f64,
    /// Diagonal term that made the kernel matrix factorizable.
    pub jitter: f64,
}

pub fn rbf(a: &[f64], b: &[f64], length_scale: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq / (2.0 * length_scale * length_scale)).exp()
}

/// Fits the exact GP posterior mean `k(x, X) (K + noise I)^{-1} y`.
///
/// If the kernel matrix cannot be factorized with the configured noise, the
/// larger jitters in [`JITTER_LADDER`] are tried before giving up.
pub fn fit_gp(features: &Matrix, targets: &[f64], cfg: &GpConfig) -> Result<GaussianProcess, ModelError> {
    check_training_data(features, targets, 1)?;
    if !(cfg.length_scale > 0.0 && cfg.length_scale.is_finite()) {
        return Err(ModelError::InvalidInput("length_scale must be positive".into()));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(ModelError::InvalidInput("noise must be non-negative".into()));
    }
    let n = features.nrows();
    if n > MAX_GP_ROWS {
        return Err(ModelError::InvalidInput(format!(
            "dense GP accepts at most {MAX_GP_ROWS} rows, got {n}"
        )));
    }
    let mut kernel = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let k = rbf(features.row(i), features.row(j), cfg.length_scale);
            kernel.set(i, j, k);
            kernel.set(j, i, k);
        }
    }
    let mut tried = cfg.noise;
    for jitter in std::iter::once(cfg.noise).chain(JITTER_LADDER.into_iter().filter(|&j| j > cfg.noise)) {
        tried = jitter;
        let mut a = kernel.clone();
        for i in 0..n {
            a.set(i, i, a.get(i, i) + jitter);
        }
        if let Some(chol) = Cholesky::factor(&a) {
            return Ok(GaussianProcess {
                train: features.clone(),
                weights: chol.solve(targets),
                length_scale: cfg.length_scale,
                jitter,
            });
        }
    }
    Err(ModelError::Factorization { jitter: tried })
}

impl GaussianProcess {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.train
            .rows()
            .zip(&self.weights)
            .map(|(t, w)| w * rbf(row, t, self.length_scale))
            .sum()
    }
}

impl Regressor for GaussianProcess {
    fn descriptor(&self) -> String {
        "gp".into()
    }

    fn predict(&self, features: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_query(features, self.train.ncols())?;
        Ok(features.rows().map(|r| self.predict_row(r)).collect())
    }
}
