//! Grids of experiments and their correlation tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{run_experiment, DatasetSpec, ErrorCause, ExperimentResult, ExperimentSpec};
use super::shift::ShiftSpec;
use super::stats::{mean, std_dev};
use super::HarnessError;
use crate::data::{RngSeed, SplitSpec};
use crate::models::ModelSpec;
use crate::retro::RetroConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingSpec {
    pub model: ModelSpec,
    pub error_cause: ErrorCause,
    /// Overrides the suite-wide split for this setting.
    #[serde(default)]
    pub split: Option<SplitSpec>,
}

/// Every dataset crossed with every setting, sharing one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    #[serde(default)]
    pub seed: RngSeed,
    pub datasets: Vec<DatasetSpec>,
    pub settings: Vec<SettingSpec>,
    #[serde(default)]
    pub retro: RetroConfig,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub shift: ShiftSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl SuiteSpec {
    pub fn from_toml_file(path: &Path) -> Result<Self, HarnessError> {
        let text = super::read_text(path)?;
        let mut spec = Self::from_toml_str(&text).map_err(|e| match e {
            HarnessError::Toml { message, .. } => HarnessError::Toml {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut spec.datasets {
            d.resolve(base);
        }
        if let Some(dir) = &spec.output_dir {
            spec.output_dir = Some(base.join(dir));
        }
        Ok(spec)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Toml {
            path: "<string>".into(),
            message: e.to_string(),
        })
    }

    /// One experiment per (dataset, setting), datasets outermost.
    pub fn expand(&self) -> Vec<ExperimentSpec> {
        let mut specs = Vec::with_capacity(self.datasets.len() * self.settings.len());
        for dataset in &self.datasets {
            for setting in &self.settings {
                let mut spec = ExperimentSpec {
                    retro: self.retro.clone(),
                    split: setting.split.clone().unwrap_or_else(|| self.split.clone()),
                    shift: self.shift.clone(),
                    seed: self.seed,
                    ..ExperimentSpec::new(dataset.clone(), setting.error_cause, setting.model.clone())
                };
                if let Some(dir) = &self.output_dir {
                    spec.output_dir = Some(dir.join(sanitize(&format!(
                        "{}__{}",
                        dataset.label(),
                        spec.setting_label()
                    ))));
                }
                specs.push(spec);
            }
        }
        specs
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// The grid used to reproduce the directional claims: three synthetic
/// datasets, each with four shifted models, two overfitting and two
/// underfitting ones.
pub fn bundled_suite() -> SuiteSpec {
    let setting = |model: &str, cause| SettingSpec {
        model: model.parse().expect("bundled model name"),
        error_cause: cause,
        split: None,
    };
    SuiteSpec {
        seed: RngSeed(2022),
        datasets: ["friedman1", "linear8", "clusters2"]
            .iter()
            .map(|n| DatasetSpec::named(n, 2000))
            .collect(),
        settings: vec![
            setting("lr", ErrorCause::ShiftInjected),
            setting("mlp", ErrorCause::ShiftInjected),
            setting("dt-15", ErrorCause::ShiftInjected),
            setting("rf", ErrorCause::ShiftInjected),
            setting("gp", ErrorCause::Overfit),
            setting("dt-unbounded", ErrorCause::Overfit),
            setting("dt-1", ErrorCause::Underfit),
            setting("mlp-s", ErrorCause::Underfit),
        ],
        retro: RetroConfig::default(),
        split: SplitSpec::RandomFraction {
            train_fraction: 0.8,
            seed: RngSeed(2022),
        },
        shift: ShiftSpec {
            seed: RngSeed(2022),
            ..ShiftSpec::default()
        },
        output_dir: None,
    }
}

/// Correlation grid: rows are datasets, columns are settings, with margins.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteTable {
    pub datasets: Vec<String>,
    pub settings: Vec<String>,
    /// `None` marks a failed experiment.
    pub cells: Vec<Vec<Option<f64>>>,
}

fn present(values: impl Iterator<Item = Option<f64>>) -> Vec<f64> {
    values.flatten().collect()
}

impl SuiteTable {
    pub fn row_values(&self, i: usize) -> Vec<f64> {
        present(self.cells[i].iter().copied())
    }

    pub fn column_values(&self, j: usize) -> Vec<f64> {
        present(self.cells.iter().map(|row| row[j]))
    }

    pub fn all_values(&self) -> Vec<f64> {
        present(self.cells.iter().flatten().copied())
    }

    pub fn cell(&self, dataset: &str, setting: &str) -> Option<f64> {
        let i = self.datasets.iter().position(|d| d == dataset)?;
        let j = self.settings.iter().position(|s| s == setting)?;
        self.cells[i][j]
    }

    pub fn grand_mean(&self) -> Option<f64> {
        mean(&self.all_values())
    }

    /// Aligned text rendering with three decimals; failed cells show `NA`.
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"));
        let mut header = vec!["dataset".to_string()];
        header.extend(self.settings.iter().cloned());
        header.extend(["mean".to_string(), "sd".to_string()]);

        let mut rows: Vec<Vec<String>> = Vec::new();
        for (i, name) in self.datasets.iter().enumerate() {
            let values = self.row_values(i);
            let mut row = vec![name.clone()];
            row.extend(self.cells[i].iter().map(|&c| fmt(c)));
            row.push(fmt(mean(&values)));
            row.push(fmt(std_dev(&values)));
            rows.push(row);
        }
        let all = self.all_values();
        let mut mean_row = vec!["mean".to_string()];
        mean_row.extend((0..self.settings.len()).map(|j| fmt(mean(&self.column_values(j)))));
        mean_row.push(fmt(mean(&all)));
        mean_row.push(String::new());
        let mut sd_row = vec!["sd".to_string()];
        sd_row.extend((0..self.settings.len()).map(|j| fmt(std_dev(&self.column_values(j)))));
        sd_row.push(String::new());
        sd_row.push(fmt(std_dev(&all)));
        rows.push(mean_row);
        rows.push(sd_row);

        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                rows.iter()
                    .map(|r| r[c].len())
                    .chain(std::iter::once(header[c].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&rows) {
            let mut line = String::new();
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(line, "{cell:<w$}", w = widths[0]);
                } else {
                    let _ = write!(line, "  {cell:>w$}", w = widths[c]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    /// Full-precision CSV with the same layout as [`SuiteTable::to_text`].
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let mut out = String::from("dataset");
        for s in &self.settings {
            out.push(',');
            out.push_str(s);
        }
        out.push_str(",mean,sd\n");
        for (i, name) in self.datasets.iter().enumerate() {
            let values = self.row_values(i);
            out.push_str(name);
            for &c in &self.cells[i] {
                out.push(',');
                out.push_str(&fmt(c));
            }
            let _ = writeln!(out, ",{},{}", fmt(mean(&values)), fmt(std_dev(&values)));
        }
        let all = self.all_values();
        out.push_str("mean");
        for j in 0..self.settings.len() {
            let _ = write!(out, ",{}", fmt(mean(&self.column_values(j))));
        }
        let _ = writeln!(out, ",{},", fmt(mean(&all)));
        out.push_str("sd");
        for j in 0..self.settings.len() {
            let _ = write!(out, ",{}", fmt(std_dev(&self.column_values(j))));
        }
        let _ = writeln!(out, ",,{}", fmt(std_dev(&all)));
        out
    }

    /// Reads the cells back from [`SuiteTable::to_csv`] output; margins are
    /// recomputed.
    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let bad = |m: &str| HarnessError::Config(format!("malformed suite CSV: {m}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty"))?.split(',').collect();
        if header.len() < 4 || header[0] != "dataset" || header[header.len() - 2..] != ["mean", "sd"] {
            return Err(bad("unexpected header"));
        }
        let settings: Vec<String> = header[1..header.len() - 2].iter().map(|s| s.to_string()).collect();
        let mut datasets = Vec::new();
        let mut cells = Vec::new();
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != header.len() {
                return Err(bad("ragged row"));
            }
            if fields[0] == "mean" || fields[0] == "sd" {
                continue;
            }
            datasets.push(fields[0].to_string());
            let row = fields[1..=settings.len()]
                .iter()
                .map(|f| match *f {
                    "NA" => Ok(None),
                    v => v.parse::<f64>().map(Some).map_err(|_| bad(&format!("bad number `{v}`"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            cells.push(row);
        }
        Ok(SuiteTable {
            datasets,
            settings,
            cells,
        })
    }
}

#[derive(Debug)]
pub struct SuiteOutcome {
    pub dataset: String,
    pub setting: String,
    pub result: Result<ExperimentResult, HarnessError>,
}

#[derive(Debug)]
pub struct SuiteReport {
    pub table: SuiteTable,
    /// In input order.
    pub outcomes: Vec<SuiteOutcome>,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &SuiteOutcome> {
        self.outcomes.iter().filter(|o| o.result.is_err())
    }

    /// Table text followed by one line per failed experiment.
    pub fn render(&self) -> String {
        let mut out = self.table.to_text();
        for o in self.failures() {
            if let Err(e) = &o.result {
                let _ = writeln!(out, "failed {} {}: {e}", o.dataset, o.setting);
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let text = dir.join("table.txt");
        std::fs::write(&text, self.render()).map_err(|e| HarnessError::io(&text, e))?;
        let csv = dir.join("table.csv");
        std::fs::write(&csv, self.table.to_csv()).map_err(|e| HarnessError::io(&csv, e))
    }
}

/// Runs the experiments in parallel; a failed experiment leaves an `NA`
/// cell and does not stop the others.
pub fn run_suite(specs: &[ExperimentSpec]) -> Result<SuiteReport, HarnessError> {
    if specs.is_empty() {
        return Err(HarnessError::Config("a suite needs at least one experiment".into()));
    }
    let outcomes: Vec<SuiteOutcome> = specs
        .par_iter()
        .map(|spec| SuiteOutcome {
            dataset: spec.dataset.label(),
            setting: spec.setting_label(),
            result: run_experiment(spec),
        })
        .collect();

    let mut datasets: Vec<String> = Vec::new();
    let mut settings: Vec<String> = Vec::new();
    for o in &outcomes {
        if !datasets.contains(&o.dataset) {
            datasets.push(o.dataset.clone());
        }
        if !settings.contains(&o.setting) {
            settings.push(o.setting.clone());
        }
    }
    let mut cells = vec![vec![None; settings.len()]; datasets.len()];
    for o in &outcomes {
        let i = datasets.iter().position(|d| *d == o.dataset).expect("listed");
        let j = settings.iter().position(|s| *s == o.setting).expect("listed");
        cells[i][j] = o.result.as_ref().ok().map(|r| r.summary.pearson_rho);
    }
    Ok(SuiteReport {
        table: SuiteTable {
            datasets,
            settings,
            cells,
        },
        outcomes,
    })
}
