//! RETRO trust scores for regression predictions.
//!
//! A [`ReferenceSet`] is built once from the training data and the model's
//! training predictions:
//!
//! 1. drop the `floor(alpha * N)` training rows with the largest absolute
//!    error;
//! 2. z-score the remaining rows (features and target), and when there are
//!    more than `threshold_dims` features, train an MLP on them and use its
//!    last hidden layer as the scoring space;
//! 3. score every kept row against the others (leave-one-out) to obtain the
//!    normalization bounds `r_min`/`r_max`.
//!
//! A new prediction `y_hat` for instance `x` is then scored from its `K`
//! nearest reference rows:
//!
//! ```text
//! d1 = mean Euclidean distance to the K neighbors        (scoring space)
//! d2 = | mean standardized neighbor target - standardized y_hat |
//! R  = -(beta * d1 + (1 - beta) * d2)
//! ```
//!
//! and optionally normalized to `[0, 1]` by the bounds, clipping outside them.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Matrix, Standardizer};
use crate::embed::{train_mlp, EmbedError, EmbeddingSpec, MlpModel};
use crate::models::{predict_checked, ModelError, Regressor};

pub const FORMAT_TAG: &str = "retroviz-reference-set";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RetroError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("alpha {alpha} leaves no reference rows out of {n}")]
    EmptyReference { n: usize, alpha: f64 },
    #[error("k_neighbors {k} needs more than {k} reference rows, have {m}")]
    TooFewReferenceRows { k: usize, m: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid reference-set file: {0}")]
    Format(String),
}

fn default_alpha() -> f64 {
    0.1
}
fn default_k() -> usize {
    10
}
fn default_beta() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetroConfig {
    /// Fraction of highest-error training rows left out of the reference set.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    /// Weight of `d1` against `d2`.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub embedding: EmbeddingSpec,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

impl Default for RetroConfig {
    fn default() -> Self {
        RetroConfig {
            alpha: default_alpha(),
            k_neighbors: default_k(),
            beta: default_beta(),
            embedding: EmbeddingSpec::default(),
            normalize: true,
        }
    }
}

impl RetroConfig {
    pub fn validate(&self) -> Result<(), RetroError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(RetroError::InvalidConfig(format!("alpha {} not in [0, 1)", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(RetroError::InvalidConfig(format!("beta {} not in [0, 1]", self.beta)));
        }
        if self.k_neighbors == 0 {
            return Err(RetroError::InvalidConfig("k_neighbors must be positive".into()));
        }
        self.embedding.validate()?;
        Ok(())
    }
}

/// `R = -(beta * d1 + (1 - beta) * d2)`.
pub fn raw_score(d1: f64, d2: f64, beta: f64) -> f64 {
    -(beta * d1 + (1.0 - beta) * d2)
}

/// Maps a raw score onto `[0, 1]` using the training bounds, clipping
/// values outside them. With collapsed bounds the result is 1 at or above
/// the bound and 0 below it.
pub fn normalize_score(raw: f64, r_min: f64, r_max: f64) -> f64 {
    if r_max > r_min {
        ((raw - r_min) / (r_max - r_min)).clamp(0.0, 1.0)
    } else if raw >= r_max {
        1.0
    } else {
        0.0
    }
}

/// Indices of the rows kept after dropping the `floor(alpha * N)` largest
/// absolute errors, ascending. Equal errors keep the lower row index.
pub fn filter_errors(train: &Dataset, predictions: &[f64], alpha: f64) -> Result<Vec<usize>, RetroError> {
    filter_by_error(&train.targets, predictions, alpha)
}

pub fn filter_by_error(targets: &[f64], predictions: &[f64], alpha: f64) -> Result<Vec<usize>, RetroError> {
    if predictions.len() != targets.len() {
        return Err(RetroError::DimensionMismatch {
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(RetroError::InvalidConfig(format!("alpha {alpha} not in [0, 1)")));
    }
    if predictions.iter().any(|p| !p.is_finite()) {
        return Err(RetroError::NonFinite);
    }
    let n = targets.len();
    let drop = (alpha * n as f64).floor() as usize;
    let keep = n - drop;
    if keep == 0 {
        return Err(RetroError::EmptyReference { n, alpha });
    }
    let errors: Vec<f64> = targets.iter().zip(predictions).map(|(y, p)| (y - p).abs()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(a.cmp(&b)));
    order.truncate(keep);
    order.sort_unstable();
    Ok(order)
}

/// The `k` nearest rows of a point set, ascending by distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbors {
    pub indices: Vec<usize>,
    pub distances: Vec<f64>,
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Exhaustive k-nearest-neighbor search; ties go to the lower row index.
/// `exclude` removes one row from consideration.
pub fn nearest_neighbors(
    points: &Matrix,
    query: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Result<Neighbors, RetroError> {
    if query.len() != points.ncols() {
        return Err(RetroError::DimensionMismatch {
            expected: points.ncols(),
            found: query.len(),
        });
    }
    let available = points.nrows() - usize::from(exclude.is_some_and(|e| e < points.nrows()));
    if k == 0 || k > available {
        return Err(RetroError::TooFewReferenceRows { k, m: available });
    }
    let mut candidates: Vec<(f64, usize)> = points
        .rows()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .map(|(i, row)| (euclidean(row, query), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(cmp);
    Ok(Neighbors {
        indices: candidates.iter().map(|c| c.1).collect(),
        distances: candidates.iter().map(|c| c.0).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetroScore {
    /// Mean distance to the neighbors, in scoring-space units.
    pub d1: f64,
    /// Distance between the standardized prediction and the neighbors' mean
    /// standardized target.
    pub d2: f64,
    pub raw: f64,
    pub normalized: Option<f64>,
    /// Reference-set rows, ascending by distance.
    pub neighbor_indices: Vec<usize>,
    pub neighbor_distances: Vec<f64>,
}

/// Everything needed to score new predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub feature_names: Vec<String>,
    pub target_name: String,
    /// Rows in scoring space (standardized, possibly embedded).
    pub points: Matrix,
    pub targets_std: Vec<f64>,
    /// Original feature values of the kept rows.
    pub raw_rows: Matrix,
    pub raw_targets: Vec<f64>,
    /// Training-row index of each reference row.
    pub source_rows: Vec<usize>,
    pub standardizer: Standardizer,
    pub embedder: Option<MlpModel>,
    pub config: RetroConfig,
    pub r_min: f64,
    pub r_max: f64,
}

#[derive(Serialize, Deserialize)]
struct ReferenceSetFile {
    format: String,
    version: u32,
    reference_set: ReferenceSet,
}

/// Builds a reference set by asking `model` for its training predictions.
pub fn build_reference_set(
    train: &Dataset,
    model: &dyn Regressor,
    cfg: &RetroConfig,
) -> Result<ReferenceSet, RetroError> {
    let predictions = predict_checked(model, &train.features)?;
    ReferenceSet::from_predictions(train, &predictions, cfg)
}

impl ReferenceSet {
    /// Builds a reference set from precomputed training predictions.
    pub fn from_predictions(train: &Dataset, predictions: &[f64], cfg: &RetroConfig) -> Result<Self, RetroError> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(DataError::Empty.into());
        }
        let kept = filter_errors(train, predictions, cfg.alpha)?;
        let m = kept.len();
        if cfg.k_neighbors >= m {
            return Err(RetroError::TooFewReferenceRows {
                k: cfg.k_neighbors,
                m,
            });
        }
        let reference = train.select_rows(&kept);
        let standardizer = Standardizer::fit(&reference)?;
        let standardized = standardizer.transform_matrix(&reference.features)?;
        let targets_std: Vec<f64> = reference
            .targets
            .iter()
            .map(|&y| standardizer.transform_target(y))
            .collect();
        let (points, embedder) = if cfg.embedding.applies_to(train.n_features()) {
            let fit = train_mlp(&standardized, &targets_std, &cfg.embedding.mlp)?;
            (fit.model.embed_matrix(&standardized)?, Some(fit.model))
        } else {
            (standardized, None)
        };

        let mut set = ReferenceSet {
            feature_names: train.feature_names.clone(),
            target_name: train.target_name.clone(),
            points,
            targets_std,
            raw_rows: reference.features,
            raw_targets: reference.targets,
            source_rows: kept.clone(),
            standardizer,
            embedder,
            config: cfg.clone(),
            r_min: 0.0,
            r_max: 0.0,
        };

        let mut r_min = f64::INFINITY;
        let mut r_max = f64::NEG_INFINITY;
        for (row, &source) in kept.iter().enumerate() {
            let y_hat = set.standardizer.transform_target(predictions[source]);
            let query = set.points.row(row).to_vec();
            let (d1, d2, _) = set.components(&query, y_hat, Some(row))?;
            let raw = raw_score(d1, d2, cfg.beta);
            r_min = r_min.min(raw);
            r_max = r_max.max(raw);
        }
        set.r_min = r_min;
        set.r_max = r_max;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.raw_rows.ncols()
    }

    /// Maps a raw feature vector into scoring space.
    pub fn to_scoring_space(&self, x: &[f64]) -> Result<Vec<f64>, RetroError> {
        if x.len() != self.n_features() {
            return Err(RetroError::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        let z = self.standardizer.transform_row(x)?;
        match &self.embedder {
            Some(model) => Ok(model.forward(&z)?.1),
            None => Ok(z),
        }
    }

    pub fn nearest_neighbors(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Result<Neighbors, RetroError> {
        nearest_neighbors(&self.points, query, k, exclude)
    }

    /// `(d1, d2, neighbors)` for a scoring-space query and standardized prediction.
    fn components(
        &self,
        query: &[f64],
        y_hat_std: f64,
        exclude: Option<usize>,
    ) -> Result<(f64, f64, Neighbors), RetroError> {
        let k = self.config.k_neighbors;
        let nn = self.nearest_neighbors(query, k, exclude)?;
        let d1 = nn.distances.iter().sum::<f64>() / k as f64;
        let mean_target = nn.indices.iter().map(|&i| self.targets_std[i]).sum::<f64>() / k as f64;
        let d2 = (mean_target - y_hat_std).abs();
        Ok((d1, d2, nn))
    }

    /// Scores prediction `y_hat` (target units) for raw feature vector `x`.
    pub fn score(&self, x: &[f64], y_hat: f64) -> Result<RetroScore, RetroError> {
        if !y_hat.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(RetroError::NonFinite);
        }
        let query = self.to_scoring_space(x)?;
        let y_hat_std = self.standardizer.transform_target(y_hat);
        let (d1, d2, nn) = self.components(&query, y_hat_std, None)?;
        let raw = raw_score(d1, d2, self.config.beta);
        Ok(RetroScore {
            d1,
            d2,
            raw,
            normalized: self
                .config
                .normalize
                .then(|| normalize_score(raw, self.r_min, self.r_max)),
            neighbor_indices: nn.indices,
            neighbor_distances: nn.distances,
        })
    }

    /// Scores every row; output order matches input order.
    pub fn score_batch(&self, xs: &Matrix, y_hats: &[f64]) -> Result<Vec<RetroScore>, RetroError> {
        if xs.nrows() != y_hats.len() {
            return Err(RetroError::DimensionMismatch {
                expected: xs.nrows(),
                found: y_hats.len(),
            });
        }
        (0..xs.nrows())
            .into_par_iter()
            .map(|i| self.score(xs.row(i), y_hats[i]))
            .collect()
    }

    pub fn to_json(&self) -> Result<String, RetroError> {
        let file = ReferenceSetFile {
            format: FORMAT_TAG.to_string(),
            version: FORMAT_VERSION,
            reference_set: self.clone(),
        };
        serde_json::to_string(&file).map_err(|e| RetroError::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, RetroError> {
        let file: ReferenceSetFile = serde_json::from_str(text).map_err(|e| RetroError::Format(e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(RetroError::Format(format!("unexpected format tag `{}`", file.format)));
        }
        if file.version != FORMAT_VERSION {
            return Err(RetroError::Format(format!("unsupported version {}", file.version)));
        }
        let set = file.reference_set;
        set.check_consistency()?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetroError> {
        std::fs::write(path, self.to_json()?).map_err(|source| RetroError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, RetroError> {
        let text = std::fs::read_to_string(path).map_err(|source| RetroError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn check_consistency(&self) -> Result<(), RetroError> {
        let m = self.points.nrows();
        let bad = |msg: &str| Err(RetroError::Format(msg.to_string()));
        if self.raw_rows.nrows() != m
            || self.targets_std.len() != m
            || self.raw_targets.len() != m
            || self.source_rows.len() != m
        {
            return bad("row counts disagree");
        }
        if self.feature_names.len() != self.raw_rows.ncols() || self.standardizer.dim() != self.raw_rows.ncols() {
            return bad("feature counts disagree");
        }
        if let Some(model) = &self.embedder {
            model.validate()?;
            if model.embedding_dim() != self.points.ncols() || model.input_dim != self.raw_rows.ncols() {
                return bad("embedder shape disagrees with the points");
            }
        } else if self.points.ncols() != self.raw_rows.ncols() {
            return bad("points and raw rows have different widths");
        }
        if !(self.r_min <= self.r_max && self.r_max <= 0.0) {
            return bad("normalization bounds out of order");
        }
        self.config.validate()?;
        if self.config.k_neighbors >= m {
            return bad("k_neighbors exceeds the reference rows");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RngSeed;
    use rand::Rng;

    fn dataset(rows: &[Vec<f64>], targets: Vec<f64>) -> Dataset {
        let names = (0..rows[0].len()).map(|j| format!("x{j}")).collect();
        Dataset::new("t", names, "y", Matrix::from_rows(rows).unwrap(), targets).unwrap()
    }

    fn random_dataset(n: usize, d: usize, seed: u64) -> (Dataset, Vec<f64>) {
        let mut rng = RngSeed(seed).rng();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let targets: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() + rng.random_range(-0.5..0.5)).collect();
        let predictions = rows.iter().map(|r| r.iter().sum::<f64>()).collect();
        (dataset(&rows, targets), predictions)
    }

    #[test]
    fn filter_drops_worst() {
        let ds = dataset(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![5.0, 1.0, 3.0, 2.0]);
        assert_eq!(filter_errors(&ds, &[0.0; 4], 0.25).unwrap(), vec![1, 2, 3]);
        assert_eq!(filter_errors(&ds, &[0.0; 4], 0.0).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn filter_ties_keep_lower_index() {
        let ds = dataset(&[vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 1.0, 1.0]);
        assert_eq!(filter_errors(&ds, &[0.0; 3], 0.34).unwrap(), vec![0, 1]);
    }

    #[test]
    fn filter_rejects_empty_result() {
        let ds = dataset(&[vec![0.0]], vec![1.0]);
        assert!(matches!(
            filter_errors(&ds, &[0.0], 0.99),
            Ok(v) if v == vec![0]
        ));
        assert!(filter_by_error(&[], &[], 0.5).is_err());
    }

    #[test]
    fn hand_geometry_neighbors() {
        let points = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [5.0, 5.0]]).unwrap();
        let nn = nearest_neighbors(&points, &[0.9, 0.0], 2, None).unwrap();
        assert_eq!(nn.indices, vec![1, 0]);
        assert!((nn.distances[0] - 0.1).abs() < 1e-12);
        assert!((nn.distances[1] - 0.9).abs() < 1e-12);
        let own = nearest_neighbors(&points, &[5.0, 5.0], 1, None).unwrap();
        assert_eq!((own.indices[0], own.distances[0]), (2, 0.0));
        let excluded = nearest_neighbors(&points, &[5.0, 5.0], 1, Some(2)).unwrap();
        assert_eq!(excluded.indices, vec![1]);
        assert!(nearest_neighbors(&points, &[0.0], 1, None).is_err());
        assert!(nearest_neighbors(&points, &[0.0, 0.0], 3, Some(0)).is_err());
    }

    #[test]
    fn reference_size_follows_alpha() {
        let (ds, preds) = random_dataset(100, 3, 1);
        let set = ReferenceSet::from_predictions(&ds, &preds, &RetroConfig::default()).unwrap();
        assert_eq!(set.len(), 90);
        assert!(set.embedder.is_none());
        assert_eq!(set.points.ncols(), 3);
        assert!(set.r_min <= set.r_max && set.r_max <= 0.0);
    }

    #[test]
    fn wide_data_gets_embedded() {
        let (ds, preds) = random_dataset(120, 20, 2);
        let mut cfg = RetroConfig::default();
        cfg.embedding.mlp.epochs = 5;
        let set = ReferenceSet::from_predictions(&ds, &preds, &cfg).unwrap();
        assert!(set.embedder.is_some());
        assert_eq!(set.points.ncols(), 10);
        let s = set.score(ds.features.row(0), preds[0]).unwrap();
        assert_eq!(s.neighbor_indices.len(), 10);
    }

    #[test]
    fn k_must_be_below_reference_size() {
        let (ds, preds) = random_dataset(10, 2, 3);
        let cfg = RetroConfig {
            k_neighbors: 9,
            ..RetroConfig::default()
        };
        assert!(matches!(
            ReferenceSet::from_predictions(&ds, &preds, &cfg),
            Err(RetroError::TooFewReferenceRows { k: 9, m: 9 })
        ));
    }

    #[test]
    fn duplicate_cluster_scores_zero() {
        // K = 2 exact duplicates of the query sharing target 7, plus far rows.
        let rows = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![9.0, 0.0], vec![-4.0, 6.0], vec![3.0, -8.0]];
        let targets = vec![7.0, 7.0, 0.0, 20.0, -5.0];
        let ds = dataset(&rows, targets.clone());
        let cfg = RetroConfig {
            alpha: 0.0,
            k_neighbors: 2,
            ..RetroConfig::default()
        };
        let set = ReferenceSet::from_predictions(&ds, &targets, &cfg).unwrap();
        let s = set.score(&[1.0, 1.0], 7.0).unwrap();
        assert_eq!((s.d1, s.d2, s.raw), (0.0, 0.0, 0.0));
        assert_eq!(s.normalized, Some(1.0));
    }

    #[test]
    fn beta_one_ignores_d2() {
        let (ds, preds) = random_dataset(40, 2, 4);
        let cfg = RetroConfig {
            beta: 1.0,
            ..RetroConfig::default()
        };
        let set = ReferenceSet::from_predictions(&ds, &preds, &cfg).unwrap();
        let a = set.score(&[0.1, 0.2], 100.0).unwrap();
        let b = set.score(&[0.1, 0.2], -3.0).unwrap();
        assert_eq!(a.raw, -a.d1);
        assert_eq!(a.raw, b.raw);
        assert_ne!(a.d2, b.d2);
    }

    #[test]
    fn mean_neighbor_target_cancels() {
        // Identity standardizer: features and targets already z-scored.
        let rows = vec![vec![-1.0], vec![1.0]];
        let targets = vec![4.0, 6.0];
        let set = ReferenceSet {
            feature_names: vec!["x".into()],
            target_name: "y".into(),
            points: Matrix::from_rows(&rows).unwrap(),
            targets_std: targets.clone(),
            raw_rows: Matrix::from_rows(&rows).unwrap(),
            raw_targets: targets,
            source_rows: vec![0, 1],
            standardizer: Standardizer::identity(1),
            embedder: None,
            config: RetroConfig {
                k_neighbors: 2,
                ..RetroConfig::default()
            },
            r_min: -1.0,
            r_max: 0.0,
        };
        let s = set.score(&[0.0], 5.0).unwrap();
        assert_eq!(s.d2, 0.0);
        assert_eq!(s.d1, 1.0);
    }

    #[test]
    fn batch_matches_single_scores() {
        let (ds, preds) = random_dataset(60, 3, 5);
        let set = ReferenceSet::from_predictions(&ds, &preds, &RetroConfig::default()).unwrap();
        let batch = set.score_batch(&ds.features.select_rows(&[3, 1, 4]), &[preds[3], preds[1], preds[4]]).unwrap();
        assert_eq!(batch.len(), 3);
        assert_eq!(batch[0], set.score(ds.features.row(3), preds[3]).unwrap());
        assert_eq!(batch[2], set.score(ds.features.row(4), preds[4]).unwrap());
        assert!(set.score_batch(&Matrix::empty(3), &[]).unwrap().is_empty());
        assert!(set.score_batch(&Matrix::empty(3), &[1.0]).is_err());
    }

    #[test]
    fn rejects_bad_queries() {
        let (ds, preds) = random_dataset(30, 2, 6);
        let set = ReferenceSet::from_predictions(&ds, &preds, &RetroConfig::default()).unwrap();
        assert!(matches!(set.score(&[f64::NAN, 0.0], 1.0), Err(RetroError::NonFinite)));
        assert!(matches!(set.score(&[0.0, 0.0], f64::INFINITY), Err(RetroError::NonFinite)));
        assert!(matches!(
            set.score(&[0.0], 1.0),
            Err(RetroError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn normalize_degenerate_bounds() {
        assert_eq!(normalize_score(-1.0, -1.0, -1.0), 1.0);
        assert_eq!(normalize_score(-2.0, -1.0, -1.0), 0.0);
        assert_eq!(normalize_score(-0.5, -1.0, 0.0), 0.5);
        assert_eq!(normalize_score(-5.0, -1.0, 0.0), 0.0);
    }

    #[test]
    fn json_rejects_wrong_tag() {
        let (ds, preds) = random_dataset(30, 2, 7);
        let set = ReferenceSet::from_predictions(&ds, &preds, &RetroConfig::default()).unwrap();
        let text = set.to_json().unwrap().replace(FORMAT_TAG, "something-else");
        assert!(matches!(ReferenceSet::from_json(&text), Err(RetroError::Format(_))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn cloud() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
            (12usize..40, 1usize..5).prop_flat_map(|(n, d)| {
                (
                    prop::collection::vec(prop::collection::vec(-5.0..5.0f64, d), n),
                    prop::collection::vec(-10.0..10.0f64, n),
                )
            })
        }

        proptest! {
            #[test]
            fn kept_errors_never_exceed_dropped(errors in prop::collection::vec(0.0..10.0f64, 1..60), alpha in 0.0..0.9f64) {
                let targets = vec![0.0; errors.len()];
                let kept = filter_by_error(&targets, &errors, alpha).unwrap();
                prop_assert_eq!(kept.len(), errors.len() - (alpha * errors.len() as f64).floor() as usize);
                prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
                let max_kept = kept.iter().map(|&i| errors[i]).fold(0.0, f64::max);
                let min_dropped = (0..errors.len()).filter(|i| !kept.contains(i)).map(|i| errors[i]).fold(f64::INFINITY, f64::min);
                prop_assert!(max_kept <= min_dropped);
            }

            #[test]
            fn raw_strictly_decreasing(d1 in 0.0..100.0f64, d2 in 0.0..100.0f64, step in 1e-3..10.0f64, beta in 0.01..0.99f64) {
                prop_assert!(raw_score(d1 + step, d2, beta) < raw_score(d1, d2, beta));
                prop_assert!(raw_score(d1, d2 + step, beta) < raw_score(d1, d2, beta));
                prop_assert!(raw_score(d1, d2, beta) <= 0.0);
            }

            #[test]
            fn column_translation_leaves_scores_unchanged((rows, targets) in cloud(), c in -1000.0..1000.0f64, column in 0usize..5) {
                let ds = dataset(&rows, targets.clone());
                let j = column % ds.n_features();
                let mut moved_rows = rows.clone();
                for r in &mut moved_rows {
                    r[j] += c;
                }
                let moved = dataset(&moved_rows, targets.clone());
                let cfg = RetroConfig { k_neighbors: 3, ..RetroConfig::default() };
                let a = ReferenceSet::from_predictions(&ds, &targets, &cfg).unwrap();
                let b = ReferenceSet::from_predictions(&moved, &targets, &cfg).unwrap();
                prop_assert!((a.r_min - b.r_min).abs() < 1e-9 && (a.r_max - b.r_max).abs() < 1e-9);
                let mut q = rows[0].clone();
                q[0] += 0.25;
                let sa = a.score(&q, 1.0).unwrap();
                q[j] += c;
                let sb = b.score(&q, 1.0).unwrap();
                prop_assert!((sa.raw - sb.raw).abs() < 1e-9);
                prop_assert!((sa.d1 - sb.d1).abs() < 1e-9 && (sa.d2 - sb.d2).abs() < 1e-9);
                prop_assert!((sa.normalized.unwrap() - sb.normalized.unwrap()).abs() < 1e-9);
            }

            #[test]
            fn training_scores_fit_the_bounds((rows, targets) in cloud(), noise in prop::collection::vec(-1.0..1.0f64, 40)) {
                let ds = dataset(&rows, targets.clone());
                let preds: Vec<f64> = targets.iter().zip(&noise).map(|(t, e)| t + e).collect();
                let cfg = RetroConfig { k_neighbors: 3, ..RetroConfig::default() };
                let set = ReferenceSet::from_predictions(&ds, &preds, &cfg).unwrap();
                prop_assert!(set.r_min <= set.r_max && set.r_max <= 0.0);
                let again = ReferenceSet::from_predictions(&ds, &preds, &cfg).unwrap();
                prop_assert_eq!(&set, &again);
                for (row, &src) in set.source_rows.iter().enumerate() {
                    let q = set.points.row(row).to_vec();
                    let y = set.standardizer.transform_target(preds[src]);
                    let (d1, d2, _) = set.components(&q, y, Some(row)).unwrap();
                    let raw = raw_score(d1, d2, cfg.beta);
                    prop_assert!(set.r_min <= raw && raw <= set.r_max);
                }
            }
        }
    }
}
