//! Experiment harness: induce a cause of error, score the resulting
//! predictions, and correlate scores with absolute errors.

use std::path::Path;

use thiserror::Error;

use crate::data::DataError;
use crate::models::ModelError;
use crate::retro::RetroError;
use crate::viz::VizError;

pub mod experiment;
pub mod shift;
pub mod stats;
pub mod suite;
pub mod synthetic;

pub use experiment::{run_experiment, DatasetSpec, ErrorCause, ExperimentResult, ExperimentSpec, ExperimentSummary};
pub use shift::{inject_shift, permutation_importance, ImportanceMode, ShiftSpec};
pub use stats::{pearson, StatsError};
pub use suite::{bundled_suite, run_suite, SettingSpec, SuiteReport, SuiteSpec, SuiteTable};
pub use synthetic::generate_synthetic;

/// Process exit codes of the command-line tool.
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_MODEL: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse {path}: {message}")]
    Toml { path: String, message: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown synthetic dataset `{0}`")]
    UnknownGenerator(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{stage}: {source}")]
    Model {
        stage: &'static str,
        #[source]
        source: ModelError,
    },
    #[error("{stage}: {source}")]
    Retro {
        stage: &'static str,
        #[source]
        source: RetroError,
    },
    #[error(transparent)]
    Viz(#[from] VizError),
    #[error("{stage}: {source}")]
    Degenerate {
        stage: &'static str,
        #[source]
        source: StatsError,
    },
}

impl HarnessError {
    pub fn model(stage: &'static str, source: ModelError) -> Self {
        HarnessError::Model { stage, source }
    }

    pub fn retro(stage: &'static str, source: RetroError) -> Self {
        HarnessError::Retro { stage, source }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 for usage and configuration errors, 2 for data errors, 3 for model
    /// and external-process errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Toml { .. } | HarnessError::UnknownGenerator(_) => EXIT_USAGE,
            HarnessError::Viz(VizError::UnknownFeature(_) | VizError::InvalidSelection(_))
            | HarnessError::Viz(VizError::DegenerateCanvas { .. }) => EXIT_USAGE,
            HarnessError::Model { .. } => EXIT_MODEL,
            HarnessError::Retro { source, .. } => match source {
                RetroError::Model(_) | RetroError::Embed(_) => EXIT_MODEL,
                RetroError::InvalidConfig(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            },
            _ => EXIT_DATA,
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}
