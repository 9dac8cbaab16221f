//! Ordinary least squares with an intercept.

use serde::{Deserialize, Serialize};

use super::{check_query, check_training_data, ModelError, Regressor};
use crate::data::Matrix;
use crate::linalg::Cholesky;

/// Ridge added to the normal equations when they are singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

/// Solves the normal equations `[1 X]ᵀ[1 X] β = [1 X]ᵀ y`.
///
/// A singular system (duplicate or constant columns, `N <= D`) is retried with
/// [`RIDGE_FALLBACK`] on the diagonal, then with that ridge scaled by the
/// largest diagonal entry.
pub fn fit_linear(features: &Matrix, targets: &[f64]) -> Result<LinearModel, ModelError> {
    check_training_data(features, targets, 1)?;
    let d = features.ncols() + 1;
    let mut gram = Matrix::zeros(d, d);
    let mut rhs = vec![0.0; d];
    let mut augmented = vec![1.0; d];
    for (row, &y) in features.rows().zip(targets) {
        augmented[1..].copy_from_slice(row);
        for i in 0..d {
            rhs[i] += augmented[i] * y;
            for j in 0..=i {
                let v = gram.get(i, j) + augmented[i] * augmented[j];
                gram.set(i, j, v);
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram.set(j, i, gram.get(i, j));
        }
    }
    let max_diag = (0..d).map(|i| gram.get(i, i)).fold(0.0, f64::max);
    let beta = [0.0, RIDGE_FALLBACK, RIDGE_FALLBACK * max_diag.max(1.0)]
        .into_iter()
        .find_map(|ridge| {
            let mut a = gram.clone();
            for i in 0..d {
                a.set(i, i, a.get(i, i) + ridge);
            }
            Cholesky::factor(&a).map(|c| c.solve(&rhs))
        })
        .ok_or_else(|| ModelError::InvalidInput("least-squares system is singular".into()))?;
    Ok(LinearModel {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
    })
}

impl LinearModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }
}

impl Regressor for LinearModel {
    fn descriptor(&self) -> String {
        "lr".into()
    }

    fn predict(&self, features: &Matrix) -> Result<Vec<f64>, ModelError> {
        check_query(features, self.coefficients.len())?;
        Ok(features.rows().map(|r| self.predict_row(r)).collect())
    }
}
