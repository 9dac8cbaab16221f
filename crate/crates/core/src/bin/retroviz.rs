use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use retroviz::data::{load_csv, read_numeric_csv, Matrix, NonFinitePolicy, RngSeed};
use retroviz::harness::{
    bundled_suite, generate_synthetic, run_experiment, run_suite, ExperimentSpec, HarnessError, SuiteSpec,
};
use retroviz::models::{predict_checked, ModelSpec, Regressor};
use retroviz::retro::{build_reference_set, ReferenceSet, RetroConfig};
use retroviz::viz::{build_figure, render_svg, FeatureSelection};

#[derive(Parser)]
#[command(name = "retroviz", version, about = "Reference-based trust scores for regression predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model on training data and save its reference set.
    BuildRef(BuildRefArgs),
    /// Score predictions for every row of a CSV file.
    Score(ScoreArgs),
    /// Draw the explanation figure for one row as SVG.
    Explain(ExplainArgs),
    /// Run one experiment from a TOML file.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Run a grid of experiments and print the correlation table.
    Suite {
        /// TOML suite file; the bundled grid when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Directory for table.txt and table.csv (overrides the file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic dataset as CSV.
    Generate {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 2000)]
        rows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// `lr`, `mlp`, `mlp-s`, `dt-N`, `dt-unbounded`, `rf`, `gp`, or `cmd:<program args>`.
    #[arg(long)]
    model: Option<String>,
    /// Seconds allowed for an external model to start.
    #[arg(long, default_value_t = 10.0)]
    startup_timeout: f64,
    /// Seconds allowed per external-model request.
    #[arg(long, default_value_t = 60.0)]
    request_timeout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BuildRefArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    target: String,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    out: PathBuf,
}

/// Where predictions come from when scoring or explaining.
#[derive(Args)]
struct PredictionArgs {
    /// CSV whose `prediction` column (or only column) holds one prediction per input row.
    #[arg(long, conflicts_with = "model")]
    predictions: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Training CSV for refitting a bundled model; its target column is the reference set's.
    #[arg(long)]
    train: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    source: PredictionArgs,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Zero-based data row of the input CSV.
    #[arg(long)]
    row: usize,
    #[command(flatten)]
    source: PredictionArgs,
    /// Comma-separated feature names to display.
    #[arg(long, value_delimiter = ',', conflicts_with = "top_variance")]
    features: Option<Vec<String>>,
    /// Display the N features that vary most across the drawn lines.
    #[arg(long)]
    top_variance: Option<usize>,
    #[arg(long, default_value_t = 900)]
    width: u32,
    #[arg(long, default_value_t = 500)]
    height: u32,
    /// Print the normalized score in the title block.
    #[arg(long)]
    annotate_score: bool,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn parse_model(args: &ModelArgs) -> Result<ModelSpec, HarnessError> {
    let name = args
        .model
        .as_deref()
        .ok_or_else(|| HarnessError::Config("--model is required".into()))?;
    let spec: ModelSpec = name.parse().map_err(|e| HarnessError::Config(format!("{e}")))?;
    Ok(match spec {
        ModelSpec::External(ext) => {
            let seconds = |s: f64, flag: &str| {
                Duration::try_from_secs_f64(s).map_err(|_| HarnessError::Config(format!("invalid {flag} {s}")))
            };
            ModelSpec::External(ext.with_timeouts(
                seconds(args.startup_timeout, "--startup-timeout")?,
                seconds(args.request_timeout, "--request-timeout")?,
            ))
        }
        other => other,
    })
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn warn_dropped(path: &Path, dropped: usize) {
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} rows with non-finite values from {}", path.display());
    }
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::BuildRef(args) => build_ref(args),
        Command::Score(args) => score(args),
        Command::Explain(args) => explain(args),
        Command::Experiment { spec } => {
            let spec = ExperimentSpec::from_toml_file(&spec)?;
            let result = run_experiment(&spec)?;
            println!("{}", serde_json::to_string_pretty(&result.summary).expect("summary serializes"));
            Ok(())
        }
        Command::Suite { spec, out } => {
            let mut suite = match spec {
                Some(path) => SuiteSpec::from_toml_file(&path)?,
                None => bundled_suite(),
            };
            if out.is_some() {
                suite.output_dir = out;
            }
            let report = run_suite(&suite.expand())?;
            if let Some(dir) = &suite.output_dir {
                report.write(dir)?;
            }
            print!("{}", report.render());
            Ok(())
        }
        Command::Generate { name, rows, seed, out } => {
            let ds = generate_synthetic(&name, rows, RngSeed(seed))?;
            ds.write_csv(&out)?;
            Ok(())
        }
    }
}

fn build_ref(args: BuildRefArgs) -> Result<(), HarnessError> {
    let load = load_csv(&args.train, &args.target, args.delimiter)?;
    warn_dropped(&args.train, load.dropped_rows);
    let train = load.dataset;
    let spec = parse_model(&args.model)?;
    let cfg = RetroConfig {
        alpha: args.alpha,
        k_neighbors: args.k,
        beta: args.beta,
        ..RetroConfig::default()
    };
    cfg.validate().map_err(|e| HarnessError::retro("configuration", e))?;
    let model = spec
        .fit(&train.features, &train.targets, RngSeed(args.model.seed))
        .map_err(|e| HarnessError::model("fitting", e))?;
    let reference =
        build_reference_set(&train, model.as_ref(), &cfg).map_err(|e| HarnessError::retro("building the reference set", e))?;
    reference.save(&args.out).map_err(|e| HarnessError::retro("saving", e))?;
    eprintln!(
        "reference set: {} of {} rows, bounds [{}, {}]",
        reference.len(),
        train.n_rows(),
        reference.r_min,
        reference.r_max
    );
    Ok(())
}

fn load_reference(path: &Path) -> Result<ReferenceSet, HarnessError> {
    ReferenceSet::load(path).map_err(|e| HarnessError::retro("loading the reference set", e))
}

fn load_inputs(path: &Path, reference: &ReferenceSet, delimiter: char) -> Result<Matrix, HarnessError> {
    let table = read_numeric_csv(path, delimiter, NonFinitePolicy::Reject)?;
    Ok(table.select_columns(&reference.feature_names)?)
}

fn predictions_for(
    source: &PredictionArgs,
    reference: &ReferenceSet,
    inputs: &Matrix,
    delimiter: char,
) -> Result<Vec<f64>, HarnessError> {
    if let Some(path) = &source.predictions {
        let table = read_numeric_csv(path, delimiter, NonFinitePolicy::Reject)?;
        let column = match table.column_index("prediction") {
            Ok(j) => j,
            Err(_) if table.headers.len() == 1 => 0,
            Err(e) => return Err(e.into()),
        };
        let values = table.values.column(column);
        if values.len() != inputs.nrows() {
            return Err(HarnessError::Config(format!(
                "{} predictions for {} input rows",
                values.len(),
                inputs.nrows()
            )));
        }
        return Ok(values);
    }
    if source.model.model.is_none() {
        return Err(HarnessError::Config("give --predictions or --model".into()));
    }
    let spec = parse_model(&source.model)?;
    let model: Box<dyn Regressor> = match (&spec, &source.train) {
        (_, Some(train)) => {
            let load = load_csv(train, &reference.target_name, delimiter)?;
            warn_dropped(train, load.dropped_rows);
            let train = load.dataset;
            let features = train.select_features(&reference.feature_names)?;
            spec.fit(&features, &train.targets, RngSeed(source.model.seed))
                .map_err(|e| HarnessError::model("fitting", e))?
        }
        (ModelSpec::External(_), None) => spec
            .open_pretrained()
            .map_err(|e| HarnessError::model("starting the model", e))?,
        (_, None) => {
            return Err(HarnessError::Config(format!(
                "bundled model `{spec}` needs --train to be refitted"
            )))
        }
    };
    predict_checked(model.as_ref(), inputs).map_err(|e| HarnessError::model("predicting", e))
}

fn score(args: ScoreArgs) -> Result<(), HarnessError> {
    let reference = load_reference(&args.reference)?;
    let inputs = load_inputs(&args.input, &reference, args.delimiter)?;
    let predictions = predictions_for(&args.source, &reference, &inputs, args.delimiter)?;
    let scores = reference
        .score_batch(&inputs, &predictions)
        .map_err(|e| HarnessError::retro("scoring", e))?;
    let mut out = String::from("prediction,raw,normalized,d1,d2,neighbors\n");
    for (s, p) in scores.iter().zip(&predictions) {
        let normalized = s.normalized.map(|v| v.to_string()).unwrap_or_default();
        let neighbors: Vec<String> = s.neighbor_indices.iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "{p},{},{normalized},{},{},{}\n",
            s.raw,
            s.d1,
            s.d2,
            neighbors.join(";")
        ));
    }
    write(&args.out, &out)
}

fn explain(args: ExplainArgs) -> Result<(), HarnessError> {
    let reference = load_reference(&args.reference)?;
    let inputs = load_inputs(&args.input, &reference, args.delimiter)?;
    if args.row >= inputs.nrows() {
        return Err(HarnessError::Config(format!(
            "row {} out of range; the input has {} rows",
            args.row,
            inputs.nrows()
        )));
    }
    let predictions = predictions_for(&args.source, &reference, &inputs, args.delimiter)?;
    let x = inputs.row(args.row);
    let y_hat = predictions[args.row];
    let score = reference
        .score(x, y_hat)
        .map_err(|e| HarnessError::retro("scoring", e))?;
    let sel = match (args.features, args.top_variance) {
        (Some(names), _) => FeatureSelection::explicit(names),
        (None, Some(n)) => FeatureSelection::top_variance(n),
        (None, None) => FeatureSelection::auto(reference.n_features()),
    };
    let mut figure = build_figure(&reference, x, y_hat, &score, &sel)?;
    if !args.annotate_score {
        figure.retro_score_annotation = None;
    }
    write(&args.out, &render_svg(&figure, args.width, args.height)?)?;
    eprintln!(
        "row {}: prediction {y_hat}, raw score {}, normalized {}",
        args.row,
        score.raw,
        score.normalized.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
    );
    Ok(())
}
