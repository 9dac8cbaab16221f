//! One experiment: split, fit, induce the error cause, score, correlate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::shift::{inject_shift, select_shift_features, ShiftSpec};
use super::stats::{mean, mse, pearson};
use super::synthetic::{generate_synthetic, is_generator};
use super::HarnessError;
use crate::data::{load_csv, split, Dataset, RngSeed, SplitSpec};
use crate::models::{predict_checked, ModelSpec};
use crate::retro::{ReferenceSet, RetroConfig};

/// Test MSE must exceed this multiple of train MSE for an overfit.
pub const OVERFIT_RATIO: f64 = 10.0;
/// Train and test MSE of an underfit model stay within this factor.
pub const UNDERFIT_RATIO: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCause {
    ShiftNatural,
    ShiftInjected,
    Overfit,
    Underfit,
}

impl ErrorCause {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCause::ShiftNatural => "shift_natural",
            ErrorCause::ShiftInjected => "shift_injected",
            ErrorCause::Overfit => "overfit",
            ErrorCause::Underfit => "underfit",
        }
    }
}

fn default_rows() -> usize {
    2000
}
fn default_target() -> String {
    "y".into()
}
fn default_delimiter() -> char {
    ','
}

/// A synthetic generator name or a CSV path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: String,
    /// Rows drawn from a generator; ignored for CSV files.
    #[serde(default = "default_rows")]
    pub n_rows: usize,
    /// Target column of a CSV file; generators name their own target.
    #[serde(default = "default_target")]
    pub target: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub label: Option<String>,
}

impl DatasetSpec {
    pub fn named(source: &str, n_rows: usize) -> Self {
        DatasetSpec {
            source: source.to_string(),
            n_rows,
            target: default_target(),
            delimiter: default_delimiter(),
            label: None,
        }
    }

    pub fn label(&self) -> String {
        if let Some(label) = &self.label {
            return label.clone();
        }
        if is_generator(&self.source) {
            return self.source.clone();
        }
        Path::new(&self.source)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.source.clone())
    }

    pub fn load(&self, seed: RngSeed) -> Result<Dataset, HarnessError> {
        if is_generator(&self.source) {
            generate_synthetic(&self.source, self.n_rows, seed)
        } else {
            Ok(load_csv(Path::new(&self.source), &self.target, self.delimiter)?.dataset)
        }
    }

    /// Makes a relative CSV path relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        if !is_generator(&self.source) && Path::new(&self.source).is_relative() {
            self.source = base.join(&self.source).to_string_lossy().into_owned();
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DatasetField {
    Name(String),
    Full(DatasetSpec),
}

pub(crate) fn deserialize_dataset<'de, D: serde::Deserializer<'de>>(d: D) -> Result<DatasetSpec, D::Error> {
    Ok(match DatasetField::deserialize(d)? {
        DatasetField::Name(name) => DatasetSpec::named(&name, default_rows()),
        DatasetField::Full(spec) => spec,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(deserialize_with = "deserialize_dataset")]
    pub dataset: DatasetSpec,
    pub error_cause: ErrorCause,
    pub model: ModelSpec,
    #[serde(default)]
    pub retro: RetroConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub shift: ShiftSpec,
    /// Seeds data generation and model fitting.
    #[serde(default)]
    pub seed: RngSeed,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSpec, error_cause: ErrorCause, model: ModelSpec) -> Self {
        ExperimentSpec {
            name: None,
            dataset,
            error_cause,
            model,
            retro: RetroConfig::default(),
            split: SplitSpec::default(),
            shift: ShiftSpec::default(),
            seed: RngSeed::default(),
            output_dir: None,
        }
    }

    pub fn setting_label(&self) -> String {
        format!("{}/{}", self.model, self.error_cause.as_str())
    }

    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("{}/{}", self.dataset.label(), self.setting_label()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.retro.validate().map_err(|e| HarnessError::retro("configuration", e))?;
        self.split.validate()?;
        if self.error_cause == ErrorCause::ShiftNatural && !matches!(self.split, SplitSpec::ByColumnValue { .. }) {
            return Err(HarnessError::Config(
                "shift_natural needs a by_column_value split".into(),
            ));
        }
        if self.error_cause == ErrorCause::ShiftInjected {
            self.shift.validate()?;
        }
        Ok(())
    }

    /// Parses a TOML experiment file; relative paths are taken from the
    /// file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self, HarnessError> {
        let text = super::read_text(path)?;
        let mut spec: ExperimentSpec = toml::from_str(&text).map_err(|e| HarnessError::Toml {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.dataset.resolve(base);
        if let Some(dir) = &spec.output_dir {
            spec.output_dir = Some(base.join(dir));
        }
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub retro_raw: f64,
    pub retro_normalized: Option<f64>,
    pub abs_error: f64,
    pub prediction: f64,
    pub truth: f64,
    pub d1: f64,
    pub d2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub dataset: String,
    pub setting: String,
    pub error_cause: ErrorCause,
    /// Correlation between raw RETRO scores and absolute errors.
    pub pearson_rho: f64,
    /// Same with normalized scores; absent when they are constant.
    pub pearson_rho_normalized: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_reference: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub mean_abs_error: f64,
    pub mean_retro: f64,
    pub mean_retro_normalized: Option<f64>,
    pub shifted_features: Vec<String>,
    /// Whether the train/test MSE relation expected of the cause holds.
    pub cause_established: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub summary: ExperimentSummary,
    pub per_instance: Vec<InstanceRecord>,
}

/// Runs the experiment and, if `output_dir` is set, writes
/// `per_instance.csv` and `summary.json` there.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    spec.validate()?;
    let data = spec.dataset.load(spec.seed)?;
    let (train, test) = split(&data, &spec.split)?;

    let model = spec
        .model
        .fit(&train.features, &train.targets, spec.seed.derive(1))
        .map_err(|e| HarnessError::model("fitting", e))?;
    let train_pred =
        predict_checked(model.as_ref(), &train.features).map_err(|e| HarnessError::model("predicting train", e))?;

    let (test, shifted_features) = if spec.error_cause == ErrorCause::ShiftInjected {
        let features = select_shift_features(model.as_ref(), &test, &spec.shift)?;
        (inject_shift(&test, &features, &spec.shift)?, features)
    } else {
        (test, Vec::new())
    };
    let test_pred =
        predict_checked(model.as_ref(), &test.features).map_err(|e| HarnessError::model("predicting test", e))?;

    let reference = ReferenceSet::from_predictions(&train, &train_pred, &spec.retro)
        .map_err(|e| HarnessError::retro("building the reference set", e))?;
    let scores = reference
        .score_batch(&test.features, &test_pred)
        .map_err(|e| HarnessError::retro("scoring", e))?;

    let per_instance: Vec<InstanceRecord> = scores
        .iter()
        .zip(&test_pred)
        .zip(&test.targets)
        .map(|((s, &p), &t)| InstanceRecord {
            retro_raw: s.raw,
            retro_normalized: s.normalized,
            abs_error: (p - t).abs(),
            prediction: p,
            truth: t,
            d1: s.d1,
            d2: s.d2,
        })
        .collect();
    let raw: Vec<f64> = per_instance.iter().map(|r| r.retro_raw).collect();
    let errors: Vec<f64> = per_instance.iter().map(|r| r.abs_error).collect();
    let normalized: Option<Vec<f64>> = per_instance.iter().map(|r| r.retro_normalized).collect();
    let pearson_rho = pearson(&raw, &errors).map_err(|e| HarnessError::Degenerate {
        stage: "correlating scores with errors",
        source: e,
    })?;

    let train_mse = mse(&train_pred, &train.targets);
    let test_mse = mse(&test_pred, &test.targets);
    let cause_established = match spec.error_cause {
        ErrorCause::Overfit => Some(test_mse > OVERFIT_RATIO * train_mse),
        ErrorCause::Underfit => Some(train_mse <= UNDERFIT_RATIO * test_mse && test_mse <= UNDERFIT_RATIO * train_mse),
        _ => None,
    };

    let result = ExperimentResult {
        summary: ExperimentSummary {
            name: spec.display_name(),
            dataset: spec.dataset.label(),
            setting: spec.setting_label(),
            error_cause: spec.error_cause,
            pearson_rho,
            pearson_rho_normalized: normalized.as_ref().and_then(|n| pearson(n, &errors).ok()),
            n_train: train.n_rows(),
            n_test: test.n_rows(),
            n_reference: reference.len(),
            train_mse,
            test_mse,
            mean_abs_error: mean(&errors).unwrap_or(f64::NAN),
            mean_retro: mean(&raw).unwrap_or(f64::NAN),
            mean_retro_normalized: normalized.as_deref().and_then(mean),
            shifted_features,
            cause_established,
        },
        per_instance,
    };
    if let Some(dir) = &spec.output_dir {
        write_outputs(&result, dir)?;
    }
    Ok(result)
}

pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let csv_path = dir.join("per_instance.csv");
    let mut out = String::from("row,retro_raw,retro_normalized,abs_error,prediction,truth,d1,d2\n");
    for (i, r) in result.per_instance.iter().enumerate() {
        let normalized = r.retro_normalized.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{i},{},{normalized},{},{},{},{},{}\n",
            r.retro_raw, r.abs_error, r.prediction, r.truth, r.d1, r.d2
        ));
    }
    std::fs::write(&csv_path, out).map_err(|e| HarnessError::io(&csv_path, e))?;
    let json_path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&result.summary).expect("summary serializes");
    std::fs::write(&json_path, json + "\n").map_err(|e| HarnessError::io(&json_path, e))
}
