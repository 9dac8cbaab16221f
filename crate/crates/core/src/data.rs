//! Datasets, CSV ingestion, train/test splitting and z-score standardization.
//!
//! Everything here is immutable after construction; randomness only enters
//! through an explicit [`RngSeed`].

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Standard deviations below this are treated as zero and replaced by 1.
pub const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}: missing header line")]
    MissingHeader(PathBuf),
    #[error("duplicate column `{0}` in header")]
    DuplicateColumn(String),
    #[error("target column `{0}` not found in header")]
    MissingTargetColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}, column `{column}`: non-finite value")]
    NonFinite { line: u64, column: String },
    #[error("dataset is empty")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("split produced an empty {0} partition")]
    EmptyPartition(&'static str),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

/// Seed for every random stream in the crate.
///
/// Identical seeds give bit-identical sequences; [`RngSeed::derive`] produces
/// independent sub-streams (one per tree, per permutation, ...).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Sub-seed for stream `stream`, mixed with a splitmix64 finalizer.
    pub fn derive(self, stream: u64) -> RngSeed {
        let mut z = self
            .0
            .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix buffer has wrong length");
        Matrix { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DataError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(DataError::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// An `n x cols` matrix with no rows has `cols` columns, which
    /// `from_rows` cannot infer.
    pub fn empty(cols: usize) -> Self {
        Matrix::zeros(0, cols)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Named numeric feature matrix plus target vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub features: Matrix,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
        features: Matrix,
        targets: Vec<f64>,
    ) -> Result<Self, DataError> {
        if features.nrows() != targets.len() {
            return Err(DataError::Invalid(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(DataError::Invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if !features.is_finite() || targets.iter().any(|t| !t.is_finite()) {
            return Err(DataError::Invalid("non-finite values".into()));
        }
        Ok(Dataset {
            name: name.into(),
            feature_names,
            target_name: target_name.into(),
            features,
            targets,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize, DataError> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    /// The named feature columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Matrix, DataError> {
        let idx = names
            .iter()
            .map(|n| self.feature_index(n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Matrix::zeros(self.n_rows(), idx.len());
        for i in 0..self.n_rows() {
            for (j, &c) in idx.iter().enumerate() {
                out.set(i, j, self.features.get(i, c));
            }
        }
        Ok(out)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            features: self.features.select_rows(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
        }
    }

    /// Writes the dataset as CSV with the target as the last column.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let csv_err = |source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header = self.feature_names.clone();
        header.push(self.target_name.clone());
        writer.write_record(&header).map_err(csv_err)?;
        for (row, target) in self.features.rows().zip(&self.targets) {
            let record: Vec<String> = row
                .iter()
                .chain(std::iter::once(target))
                .map(|v| v.to_string())
                .collect();
            writer.write_record(&record).map_err(csv_err)?;
        }
        writer.flush().map_err(io_err)
    }
}

/// How rows holding NaN or infinity are treated while reading.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NonFinitePolicy {
    Drop,
    Reject,
}

/// A parsed all-numeric CSV file.
#[derive(Clone, Debug)]
pub struct NumericTable {
    pub headers: Vec<String>,
    pub values: Matrix,
    pub dropped_rows: usize,
}

impl NumericTable {
    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    }

    /// Extracts the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Result<Matrix, DataError> {
        let idx = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = Matrix::zeros(self.values.nrows(), idx.len());
        for i in 0..self.values.nrows() {
            for (j, &c) in idx.iter().enumerate() {
                out.set(i, j, self.values.get(i, c));
            }
        }
        Ok(out)
    }
}

pub fn read_numeric_csv(
    path: &Path,
    delimiter: char,
    policy: NonFinitePolicy,
) -> Result<NumericTable, DataError> {
    if !path.exists() {
        return Err(DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        });
    }
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let delimiter = u8::try_from(delimiter)
        .map_err(|_| DataError::Invalid(format!("delimiter {delimiter:?} is not ASCII")))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(DataError::MissingHeader(path.to_path_buf()));
    }
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(DataError::DuplicateColumn(h.clone()));
        }
    }

    let cols = headers.len();
    let mut data = Vec::new();
    let mut rows = 0;
    let mut dropped_rows = 0;
    let mut parsed = Vec::with_capacity(cols);
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        parsed.clear();
        for (field, column) in record.iter().zip(&headers) {
            let value: f64 = field.parse().map_err(|_| DataError::NonNumeric {
                line,
                column: column.clone(),
                value: field.to_string(),
            })?;
            parsed.push(value);
        }
        if let Some(j) = parsed.iter().position(|v| !v.is_finite()) {
            match policy {
                NonFinitePolicy::Drop => {
                    dropped_rows += 1;
                    continue;
                }
                NonFinitePolicy::Reject => {
                    return Err(DataError::NonFinite {
                        line,
                        column: headers[j].clone(),
                    })
                }
            }
        }
        data.extend_from_slice(&parsed);
        rows += 1;
    }
    Ok(NumericTable {
        headers,
        values: Matrix::from_vec(rows, cols, data),
        dropped_rows,
    })
}

/// A dataset read from CSV together with the number of rows dropped for
/// holding non-finite values.
#[derive(Clone, Debug)]
pub struct CsvLoad {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

/// Loads a CSV file, moving `target_column` out of the features.
pub fn load_csv(path: &Path, target_column: &str, delimiter: char) -> Result<CsvLoad, DataError> {
    let table = read_numeric_csv(path, delimiter, NonFinitePolicy::Drop)?;
    let target_idx = table
        .headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| DataError::MissingTargetColumn(target_column.to_string()))?;
    if table.values.is_empty() {
        return Err(DataError::Empty);
    }
    let feature_names: Vec<String> = table
        .headers
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let features = table.select_columns(&feature_names)?;
    let targets = table.values.column(target_idx);
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    Ok(CsvLoad {
        dataset: Dataset::new(name, feature_names, target_column, features, targets)?,
        dropped_rows: table.dropped_rows,
    })
}

fn default_train_fraction() -> f64 {
    0.8
}

/// How to partition a dataset into train and test rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    /// Shuffle with `seed`, then cut at `round(train_fraction * N)`.
    RandomFraction {
        #[serde(default = "default_train_fraction")]
        train_fraction: f64,
        #[serde(default)]
        seed: RngSeed,
    },
    /// Rows whose `column` value is `<= value` train, the rest test.
    ByColumnValue { column: String, value: f64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::RandomFraction {
            train_fraction: default_train_fraction(),
            seed: RngSeed::default(),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        match self {
            SplitSpec::RandomFraction { train_fraction, .. } => {
                if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                    return Err(DataError::InvalidSplit(format!(
                        "train_fraction {train_fraction} is not in (0, 1)"
                    )));
                }
            }
            SplitSpec::ByColumnValue { value, .. } => {
                if !value.is_finite() {
                    return Err(DataError::InvalidSplit("split value must be finite".into()));
                }
            }
        }
        Ok(())
    }
}

/// Returns `(train, test)`.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), DataError> {
    spec.validate()?;
    let n = ds.n_rows();
    let (train_idx, test_idx): (Vec<usize>, Vec<usize>) = match spec {
        SplitSpec::RandomFraction {
            train_fraction,
            seed,
        } => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut seed.rng());
            let cut = (train_fraction * n as f64).round() as usize;
            let test = idx.split_off(cut.min(n));
            (idx, test)
        }
        SplitSpec::ByColumnValue { column, value } => {
            let j = ds.feature_index(column)?;
            (0..n).partition(|&i| ds.features.get(i, j) <= *value)
        }
    };
    if train_idx.is_empty() {
        return Err(DataError::EmptyPartition("train"));
    }
    if test_idx.is_empty() {
        return Err(DataError::EmptyPartition("test"));
    }
    Ok((ds.select_rows(&train_idx), ds.select_rows(&test_idx)))
}

/// Per-column z-scoring statistics for features and target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std < DEGENERATE_STD { 1.0 } else { std })
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            means: vec![0.0; dim],
            std_devs: vec![1.0; dim],
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    /// Population mean and standard deviation of every column and the
    /// target; near-zero deviations are replaced by 1.
    pub fn fit(ds: &Dataset) -> Result<Self, DataError> {
        Self::fit_parts(&ds.features, &ds.targets)
    }

    pub fn fit_parts(features: &Matrix, targets: &[f64]) -> Result<Self, DataError> {
        if features.is_empty() || targets.is_empty() {
            return Err(DataError::Empty);
        }
        let (means, std_devs) = (0..features.ncols())
            .map(|j| mean_and_std((0..features.nrows()).map(|i| features.get(i, j))))
            .unzip();
        let (target_mean, target_std) = mean_and_std(targets.iter().copied());
        Ok(Standardizer {
            means,
            std_devs,
            target_mean,
            target_std,
        })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>, DataError> {
        self.check_dim(row.len())?;
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }

    pub fn inverse_row(&self, row: &[f64]) -> Result<Vec<f64>, DataError> {
        self.check_dim(row.len())?;
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.std_devs))
            .map(|(z, (m, s))| z * s + m)
            .collect())
    }

    pub fn transform_matrix(&self, features: &Matrix) -> Result<Matrix, DataError> {
        self.check_dim(features.ncols())?;
        let mut out = features.clone();
        for i in 0..out.nrows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.std_devs[j];
            }
        }
        Ok(out)
    }

    pub fn transform_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn inverse_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    /// Standardizes every feature column, and the target when
    /// `include_target` is set.
    pub fn apply(&self, ds: &Dataset, include_target: bool) -> Result<Dataset, DataError> {
        let features = self.transform_matrix(&ds.features)?;
        let targets = if include_target {
            ds.targets.iter().map(|&y| self.transform_target(y)).collect()
        } else {
            ds.targets.clone()
        };
        Ok(Dataset {
            features,
            targets,
            ..ds.clone()
        })
    }

    /// Undoes [`Standardizer::apply`].
    pub fn invert(&self, ds: &Dataset, include_target: bool) -> Result<Dataset, DataError> {
        self.check_dim(ds.n_features())?;
        let mut features = ds.features.clone();
        for i in 0..features.nrows() {
            for (j, v) in features.row_mut(i).iter_mut().enumerate() {
                *v = *v * self.std_devs[j] + self.means[j];
            }
        }
        let targets = if include_target {
            ds.targets.iter().map(|&z| self.inverse_target(z)).collect()
        } else {
            ds.targets.clone()
        };
        Ok(Dataset {
            features,
            targets,
            ..ds.clone()
        })
    }

    fn check_dim(&self, found: usize) -> Result<(), DataError> {
        if found != self.dim() {
            return Err(DataError::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i % 2) as f64]).collect();
        Dataset::new(
            "toy",
            vec!["a".into(), "wine_type".into()],
            "y",
            Matrix::from_rows(&rows).unwrap(),
            (0..n).map(|i| i as f64 * 10.0).collect(),
        )
        .unwrap()
    }

    #[test]
    fn loads_three_row_csv() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let load = load_csv(f.path(), "y", ',').unwrap();
        let ds = load.dataset;
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.features, Matrix::from_rows(&[[1.0, 2.0], [4.0, 5.0], [7.0, 8.0]]).unwrap());
        assert_eq!(ds.targets, vec![3.0, 6.0, 9.0]);
        assert_eq!(load.dropped_rows, 0);
    }

    #[test]
    fn missing_target_column() {
        let f = write_tmp("a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        assert!(matches!(
            load_csv(f.path(), "z", ','),
            Err(DataError::MissingTargetColumn(c)) if c == "z"
        ));
    }

    #[test]
    fn drops_nan_rows() {
        let f = write_tmp("a,b,y\n1,2,3\n4,NaN,6\n7,8,9\n");
        let load = load_csv(f.path(), "y", ',').unwrap();
        assert_eq!(load.dropped_rows, 1);
        assert_eq!(load.dataset.targets, vec![3.0, 9.0]);
    }

    #[test]
    fn reports_non_numeric_cell() {
        let f = write_tmp("a,b,y\n1,2,3\n4,oops,6\n");
        match load_csv(f.path(), "y", ',') {
            Err(DataError::NonNumeric {
                line,
                column,
                value,
            }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "b");
                assert_eq!(value, "oops");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicate_header_and_missing_file() {
        let f = write_tmp("a,a,y\n1,2,3\n");
        assert!(matches!(
            load_csv(f.path(), "y", ','),
            Err(DataError::DuplicateColumn(_))
        ));
        assert!(matches!(
            load_csv(Path::new("/nonexistent/x.csv"), "y", ','),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn empty_after_filtering() {
        let f = write_tmp("a,y\nNaN,1\ninf,2\n");
        assert!(matches!(load_csv(f.path(), "y", ','), Err(DataError::Empty)));
    }

    #[test]
    fn custom_delimiter() {
        let f = write_tmp("a;y\n1.5;2\n");
        let ds = load_csv(f.path(), "y", ';').unwrap().dataset;
        assert_eq!(ds.features.get(0, 0), 1.5);
    }

    #[test]
    fn random_split_sizes_and_partition() {
        let ds = toy(10);
        let spec = SplitSpec::RandomFraction {
            train_fraction: 0.8,
            seed: RngSeed(7),
        };
        let (train, test) = split(&ds, &spec).unwrap();
        assert_eq!(train.n_rows(), 8);
        assert_eq!(test.n_rows(), 2);
        let mut all: Vec<f64> = train.targets.iter().chain(&test.targets).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.targets);
        let (train2, test2) = split(&ds, &spec).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn column_split() {
        let ds = toy(10);
        let spec = SplitSpec::ByColumnValue {
            column: "wine_type".into(),
            value: 0.5,
        };
        let (train, test) = split(&ds, &spec).unwrap();
        assert!(train.features.column(1).iter().all(|&v| v == 0.0));
        assert!(test.features.column(1).iter().all(|&v| v == 1.0));
        assert_eq!(train.n_rows() + test.n_rows(), 10);

        let bad = SplitSpec::ByColumnValue {
            column: "nope".into(),
            value: 0.5,
        };
        assert!(matches!(split(&ds, &bad), Err(DataError::UnknownColumn(_))));
        let all_train = SplitSpec::ByColumnValue {
            column: "wine_type".into(),
            value: 5.0,
        };
        assert!(matches!(
            split(&ds, &all_train),
            Err(DataError::EmptyPartition("test"))
        ));
    }

    #[test]
    fn invalid_fraction() {
        let spec = SplitSpec::RandomFraction {
            train_fraction: 1.0,
            seed: RngSeed(0),
        };
        assert!(split(&toy(10), &spec).is_err());
    }

    #[test]
    fn standardizer_degenerate_and_two_point() {
        let ds = Dataset::new(
            "s",
            vec!["c".into(), "t".into()],
            "y",
            Matrix::from_rows(&[[1.0, 0.0], [1.0, 2.0]]).unwrap(),
            vec![5.0, 5.0],
        )
        .unwrap();
        let s = Standardizer::fit(&ds).unwrap();
        assert_eq!(s.means, vec![1.0, 1.0]);
        assert_eq!(s.std_devs, vec![1.0, 1.0]);
        assert_eq!(s.target_std, 1.0);
        let z = s.transform_row(&[1.0, 2.0]).unwrap();
        assert_eq!(z[1], 1.0);
        assert_eq!(s.transform_row(&[1.0, 0.0]).unwrap()[1], -1.0);
        assert!(matches!(
            s.transform_row(&[1.0]),
            Err(DataError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn identity_standardizer_is_noop() {
        let ds = toy(5);
        let out = Standardizer::identity(2).apply(&ds, true).unwrap();
        assert_eq!(out, ds);
    }

    #[test]
    fn standardized_training_columns_are_unit() {
        let ds = toy(9);
        let s = Standardizer::fit(&ds).unwrap();
        let z = s.apply(&ds, true).unwrap();
        for j in 0..2 {
            let col = z.features.column(j);
            let (m, sd) = mean_and_std(col.iter().copied());
            assert!(m.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seed_derivation_is_stable() {
        assert_eq!(RngSeed(3).derive(1), RngSeed(3).derive(1));
        assert_ne!(RngSeed(3).derive(1), RngSeed(3).derive(2));
    }

    proptest! {
        #[test]
        fn apply_then_invert_is_identity(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..30)
        ) {
            let n = rows.len();
            let ds = Dataset::new(
                "p",
                vec!["a".into(), "b".into(), "c".into()],
                "y",
                Matrix::from_rows(&rows).unwrap(),
                (0..n).map(|i| (i as f64).sin() * 50.0).collect(),
            ).unwrap();
            let s = Standardizer::fit(&ds).unwrap();
            let back = s.invert(&s.apply(&ds, true).unwrap(), true).unwrap();
            for (a, b) in back.features.as_slice().iter().zip(ds.features.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
            for (a, b) in back.targets.iter().zip(&ds.targets) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
        }

        #[test]
        fn random_split_is_exhaustive(n in 2usize..60, seed in any::<u64>()) {
            let ds = toy(n);
            let spec = SplitSpec::RandomFraction { train_fraction: 0.5, seed: RngSeed(seed) };
            let (train, test) = split(&ds, &spec).unwrap();
            let mut all: Vec<f64> = train.targets.iter().chain(&test.targets).copied().collect();
            all.sort_by(f64::total_cmp);
            prop_assert_eq!(all, ds.targets.clone());
        }
    }
}
