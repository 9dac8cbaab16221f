//! Feature importance and injected covariate shift.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::stats::mse;
use super::HarnessError;
use crate::data::{Dataset, RngSeed};
use crate::models::{predict_checked, Regressor};

/// Permutations averaged per feature.
pub const IMPORTANCE_PERMUTATIONS: usize = 5;
/// Noise standard deviation used when a column's maximum is zero.
pub const NOISE_STD_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    Permutation,
    Variance,
    Explicit,
}

fn default_fraction() -> f64 {
    0.3
}
fn default_noise_scale() -> f64 {
    0.1
}
fn default_importance() -> ImportanceMode {
    ImportanceMode::Permutation
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    #[serde(default = "default_fraction")]
    pub fraction_features: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default = "default_importance")]
    pub importance: ImportanceMode,
    #[serde(default)]
    pub explicit_features: Option<Vec<String>>,
    #[serde(default)]
    pub seed: RngSeed,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec {
            fraction_features: default_fraction(),
            noise_scale: default_noise_scale(),
            importance: default_importance(),
            explicit_features: None,
            seed: RngSeed::default(),
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.fraction_features > 0.0 && self.fraction_features <= 1.0) {
            return Err(HarnessError::Config(format!(
                "fraction_features {} not in (0, 1]",
                self.fraction_features
            )));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(HarnessError::Config(format!("noise_scale {} must be positive", self.noise_scale)));
        }
        if self.importance == ImportanceMode::Explicit && self.explicit_features.as_ref().is_none_or(Vec::is_empty) {
            return Err(HarnessError::Config("explicit importance needs explicit_features".into()));
        }
        Ok(())
    }

    /// `max(1, round(fraction_features * D))`, capped at `D`.
    pub fn feature_count(&self, d: usize) -> usize {
        ((self.fraction_features * d as f64).round() as usize).clamp(1, d.max(1))
    }
}

/// Increase in test MSE when each column is shuffled, averaged over
/// [`IMPORTANCE_PERMUTATIONS`] shuffles and clamped at zero.
pub fn permutation_importance(model: &dyn Regressor, test: &Dataset, seed: RngSeed) -> Result<Vec<f64>, HarnessError> {
    if test.is_empty() {
        return Err(crate::data::DataError::Empty.into());
    }
    let stage = "permutation importance";
    let base = mse(
        &predict_checked(model, &test.features).map_err(|e| HarnessError::model(stage, e))?,
        &test.targets,
    );
    let mut rng = seed.rng();
    let mut importances = Vec::with_capacity(test.n_features());
    for j in 0..test.n_features() {
        let column = test.features.column(j);
        let mut total = 0.0;
        for _ in 0..IMPORTANCE_PERMUTATIONS {
            let mut shuffled = column.clone();
            shuffled.shuffle(&mut rng);
            let mut features = test.features.clone();
            for (i, v) in shuffled.into_iter().enumerate() {
                features.set(i, j, v);
            }
            let p = predict_checked(model, &features).map_err(|e| HarnessError::model(stage, e))?;
            total += mse(&p, &test.targets);
        }
        importances.push((total / IMPORTANCE_PERMUTATIONS as f64 - base).max(0.0));
    }
    Ok(importances)
}

/// Population variance of each column.
pub fn variance_importance(test: &Dataset) -> Vec<f64> {
    (0..test.n_features())
        .map(|j| {
            let c = test.features.column(j);
            let m = c.iter().sum::<f64>() / c.len().max(1) as f64;
            c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len().max(1) as f64
        })
        .collect()
}

/// Names of the `count` most important features, most important first;
/// equal importances prefer the lower column index.
pub fn top_features(names: &[String], importance: &[f64], count: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    order.into_iter().take(count).map(|j| names[j].clone()).collect()
}

/// Chooses the features to perturb according to `spec.importance`.
pub fn select_shift_features(
    model: &dyn Regressor,
    test: &Dataset,
    spec: &ShiftSpec,
) -> Result<Vec<String>, HarnessError> {
    spec.validate()?;
    let count = spec.feature_count(test.n_features());
    match spec.importance {
        ImportanceMode::Permutation => {
            let imp = permutation_importance(model, test, spec.seed.derive(1))?;
            Ok(top_features(&test.feature_names, &imp, count))
        }
        ImportanceMode::Variance => Ok(top_features(&test.feature_names, &variance_importance(test), count)),
        ImportanceMode::Explicit => {
            let list = spec.explicit_features.clone().unwrap_or_default();
            for name in &list {
                test.feature_index(name)?;
            }
            Ok(list)
        }
    }
}

/// Adds `N(x_max, noise_scale * |x_max|)` noise, drawn per row, to each named
/// column, where `x_max` is the column's maximum in `test`.
pub fn inject_shift(test: &Dataset, important: &[String], spec: &ShiftSpec) -> Result<Dataset, HarnessError> {
    if !(spec.noise_scale >= 0.0 && spec.noise_scale.is_finite()) {
        return Err(HarnessError::Config(format!("noise_scale {} must be positive", spec.noise_scale)));
    }
    let columns = important
        .iter()
        .map(|name| test.feature_index(name))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = test.clone();
    let mut rng = spec.seed.derive(2).rng();
    for j in columns {
        let x_max = test.features.column(j).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let std = if x_max == 0.0 {
            NOISE_STD_FLOOR
        } else {
            spec.noise_scale * x_max.abs()
        };
        let noise = Normal::new(x_max, std).map_err(|e| HarnessError::Config(e.to_string()))?;
        for i in 0..out.n_rows() {
            let v = out.features.get(i, j) + noise.sample(&mut rng);
            out.features.set(i, j, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::models::fit_linear;
    use rand::Rng;

    fn dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = RngSeed(seed).rng();
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random_range(0.0..10.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let y = rows.iter().map(|r| 10.0 * r[0] + 0.1 * r[1]).collect();
        Dataset::new(
            "s",
            vec!["a".into(), "b".into(), "c".into()],
            "y",
            Matrix::from_rows(&rows).unwrap(),
            y,
        )
        .unwrap()
    }

    #[test]
    fn feature_count_rounds_with_floor_of_one() {
        let s = ShiftSpec::default();
        assert_eq!(s.feature_count(1), 1);
        assert_eq!(s.feature_count(5), 2);
        assert_eq!(s.feature_count(8), 2);
        assert_eq!(s.feature_count(10), 3);
        assert_eq!(s.feature_count(100), 30);
    }

    #[test]
    fn importance_ranks_used_features() {
        let ds = dataset(300, 1);
        let model = fit_linear(&ds.features, &ds.targets).unwrap();
        let imp = permutation_importance(&model, &ds, RngSeed(2)).unwrap();
        assert!(imp[0] > imp[1]);
        assert!(imp[2] < 1e-12);
        assert!(imp.iter().all(|&v| v >= 0.0));
        assert_eq!(top_features(&ds.feature_names, &imp, 1), vec!["a".to_string()]);
    }

    #[test]
    fn unselected_columns_untouched() {
        let ds = dataset(50, 3);
        let spec = ShiftSpec::default();
        let out = inject_shift(&ds, &["b".into()], &spec).unwrap();
        assert_eq!(out.features.column(0), ds.features.column(0));
        assert_eq!(out.features.column(2), ds.features.column(2));
        assert_ne!(out.features.column(1), ds.features.column(1));
        assert_eq!(out.targets, ds.targets);
        assert_eq!(out, inject_shift(&ds, &["b".into()], &spec).unwrap());
    }

    #[test]
    fn vanishing_noise_adds_the_maximum() {
        let ds = dataset(40, 4);
        let spec = ShiftSpec {
            noise_scale: 1e-300,
            ..ShiftSpec::default()
        };
        let out = inject_shift(&ds, &["a".into()], &spec).unwrap();
        let x_max = ds.features.column(0).into_iter().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..ds.n_rows() {
            assert_eq!(out.features.get(i, 0), ds.features.get(i, 0) + x_max);
        }
    }

    #[test]
    fn unknown_feature() {
        let ds = dataset(10, 5);
        assert!(inject_shift(&ds, &["zz".into()], &ShiftSpec::default()).is_err());
    }

    #[test]
    fn explicit_requires_names() {
        let spec = ShiftSpec {
            importance: ImportanceMode::Explicit,
            ..ShiftSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
