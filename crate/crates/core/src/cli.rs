//! Batch command-line front end: `fit`, `cv`, `simulate`, `predict` and
//! `report`.
//!
//! Every command writes its artifacts plus a `manifest.json` (argument echo,
//! tool version, seed) into `--out`. Failures print a JSON error document on
//! stderr and exit with 2 for input errors and 1 for internal ones.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::data::{MixedDataset, PredictorTransform, Role, Schema, UnseenCategory};
use crate::error::{Error, Result};
use crate::likelihood::ResponseKind;
use crate::model::ModelFit;
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::selection::{
    count_parameters, cross_validate, lambda_grid, select_models, write_curve_csv, write_fold_csv,
    CVGrid, CvConfig, SelectionSummary,
};
use crate::simulation::{format_table, run_study, write_replicates_csv, write_table_csv, Scenario, StudyConfig};
use crate::solver::{fit, FitConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "mixed-rrr", version, about = "Penalized reduced-rank regression for mixed-type data")]
pub struct Cli {
    /// Worker threads for cross-validation and simulation (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Fit one model and export its parameters.
    Fit(FitArgs),
    /// Cross-validate over ranks and penalty strengths.
    Cv(CvArgs),
    /// Run a selection simulation study.
    Simulate(SimulateArgs),
    /// Predict new rows with a saved model.
    Predict(PredictArgs),
    /// Re-export the tables of a saved model and summarize it.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV data file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema CSV with columns name,role,kind,categories.
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    /// Relative tolerance on the decrease of the penalized loss.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub rank: usize,
    /// Lasso weight.
    #[arg(long, default_value_t = 0.0)]
    pub lambda1: f64,
    /// Ridge weight.
    #[arg(long, default_value_t = 0.0)]
    pub lambda2: f64,
    /// Group-lasso weight.
    #[arg(long, default_value_t = 0.0)]
    pub lambda3: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Candidate ranks, comma separated.
    #[arg(long = "rank", value_delimiter = ',', default_value = "1")]
    pub ranks: Vec<usize>,
    /// Penalty the grid refers to: lasso, ridge or group-lasso.
    #[arg(long, default_value = "group-lasso")]
    pub penalty: String,
    /// Penalty grid, either `MAX:STEP` or a comma-separated list.
    #[arg(long, default_value = "100:2.5")]
    pub grid: String,
    /// Ridge weight added to lasso and group-lasso fits.
    #[arg(long, default_value_t = 0.01)]
    pub ridge: f64,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub k_levels: Vec<f64>,
    /// Refit the selected models on all rows and export them.
    #[arg(long)]
    pub refit: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// TOML study description; overrides the scenario flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub noise: usize,
    #[arg(long, default_value_t = 6)]
    pub responses: usize,
    #[arg(long, default_value_t = 20)]
    pub replications: usize,
    #[arg(long = "rank", value_delimiter = ',', default_value = "1,2,3")]
    pub ranks: Vec<usize>,
    #[arg(long, default_value = "100:2.5")]
    pub grid: String,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub k_levels: Vec<f64>,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Optional schema; defaults to the one stored in the model.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Map categories unseen during fitting to 0 instead of failing.
    #[arg(long)]
    pub allow_unseen: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

impl Command {
    fn out_dir(&self) -> &Path {
        match self {
            Command::Fit(a) => &a.out,
            Command::Cv(a) => &a.out,
            Command::Simulate(a) => &a.out,
            Command::Predict(a) => &a.out,
            Command::Report(a) => &a.out,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Fit(_) => "fit",
            Command::Cv(_) => "cv",
            Command::Simulate(_) => "simulate",
            Command::Predict(_) => "predict",
            Command::Report(_) => "report",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Fit(a) => Some(a.solver.seed),
            Command::Cv(a) => Some(a.solver.seed),
            Command::Simulate(a) => Some(a.seed),
            Command::Predict(_) | Command::Report(_) => None,
        }
    }
}

/// Parses the arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = if e.is_input_error() { EXIT_INPUT } else { EXIT_INTERNAL };
            let report = error_document(&e, code);
            eprintln!("{report}");
            let dir = cli.command.out_dir();
            if dir.is_dir() {
                let _ = fs::write(dir.join("error.json"), format!("{report}\n"));
            }
            code
        }
    }
}

/// Machine-readable error report.
pub fn error_document(e: &Error, exit_code: i32) -> String {
    let doc = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": exit_code });
    serde_json::to_string_pretty(&doc).expect("error document serializes")
}

/// Runs a parsed command inside a worker pool of the requested size.
pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let out = cli.command.out_dir();
        fs::create_dir_all(out)?;
        let outputs = match &cli.command {
            Command::Fit(a) => cmd_fit(a)?,
            Command::Cv(a) => cmd_cv(a)?,
            Command::Simulate(a) => cmd_simulate(a)?,
            Command::Predict(a) => cmd_predict(a)?,
            Command::Report(a) => cmd_report(a)?,
        };
        write_manifest(cli, &outputs)
    })
}

fn write_manifest(cli: &Cli, outputs: &[String]) -> Result<()> {
    let manifest = json!({
        "tool": "mixed-rrr",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "seed": cli.command.seed(),
        "arguments": &cli.command,
        "outputs": outputs,
    });
    write_json(&cli.command.out_dir().join("manifest.json"), &manifest)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load_data(args: &DataArgs) -> Result<MixedDataset> {
    let schema = Schema::from_csv_path(&args.schema)?;
    MixedDataset::from_csv_path(&args.data, &schema)
}

/// Parses `MAX:STEP` into an evenly spaced grid from 0, or a comma list.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidConfig(format!("cannot parse penalty grid `{spec}`"));
    if let Some((max, step)) = spec.split_once(':') {
        let max: f64 = max.trim().parse().map_err(|_| bad())?;
        let step: f64 = step.trim().parse().map_err(|_| bad())?;
        return lambda_grid(max, step);
    }
    let mut values: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(values)
}

fn cmd_fit(args: &FitArgs) -> Result<Vec<String>> {
    let data = load_data(&args.data)?;
    let mut config = FitConfig::new(args.rank, PenaltySpec::new(args.lambda1, args.lambda2, args.lambda3)?);
    config.max_outer_iters = args.solver.max_iters;
    config.rel_tolerance = args.solver.tol;
    config.seed = args.solver.seed;
    let model = fit(&data, &config)?;
    write_model_artifacts(&model, &args.out)
}

fn cmd_cv(args: &CvArgs) -> Result<Vec<String>> {
    let data = load_data(&args.data)?;
    let mut config = CvConfig::new(args.ranks.clone(), parse_grid(&args.grid)?, PenaltyKind::parse(&args.penalty)?);
    config.companion_ridge = args.ridge;
    config.folds = args.folds;
    config.seed = args.solver.seed;
    config.max_outer_iters = args.solver.max_iters;
    config.rel_tolerance = args.solver.tol;
    let grid = cross_validate(&data, &config)?;
    let selection = select_models(&grid, &args.k_levels)?;

    let out = &args.out;
    let mut outputs = vec!["cv_folds.csv".to_string(), "cv_curve.csv".to_string()];
    write_fold_csv(&grid, out.join("cv_folds.csv"))?;
    write_curve_csv(&grid, out.join("cv_curve.csv"))?;
    for ri in 0..grid.ranks.len() {
        let name = format!("cv_curve_S{}.csv", grid.ranks[ri]);
        write_curve_csv(&rank_slice(&grid, ri), out.join(&name))?;
        outputs.push(name);
    }
    write_json(&out.join("cv_summary.json"), &SelectionSummary::new(&grid, selection.clone()))?;
    outputs.push("cv_summary.json".into());

    if args.refit {
        let mut chosen = vec![("min".to_string(), selection.s_star, selection.lambda_min)];
        chosen.extend(selection.lambda_kse.iter().map(|c| (format!("{}se", c.k), c.rank, c.lambda)));
        for (label, rank, lambda) in chosen {
            let model = fit(&data, &config.fit_config(rank, lambda)?)?;
            let dir = out.join(format!("model_{label}"));
            fs::create_dir_all(&dir)?;
            for f in write_model_artifacts(&model, &dir)? {
                outputs.push(format!("model_{label}/{f}"));
            }
        }
    }
    Ok(outputs)
}

fn rank_slice(grid: &CVGrid, ri: usize) -> CVGrid {
    CVGrid {
        ranks: vec![grid.ranks[ri]],
        fold_losses: vec![grid.fold_losses[ri].clone()],
        cv_mean: vec![grid.cv_mean[ri].clone()],
        cv_se: vec![grid.cv_se[ri].clone()],
        cv_mean_per_entry: vec![grid.cv_mean_per_entry[ri].clone()],
        ..grid.clone()
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<String>> {
    let config = match &args.config {
        Some(path) => StudyConfig::from_toml(&fs::read_to_string(path)?)?,
        None => {
            let mut scenario = Scenario::new(args.n, args.noise, args.responses);
            scenario.replications = args.replications;
            scenario.seed = args.seed;
            let grid = parse_grid(&args.grid)?;
            let mut config = StudyConfig::new(vec![scenario]);
            config.grid_max = grid.last().copied().unwrap_or(0.0);
            config.grid_step = if grid.len() > 1 { grid[1] - grid[0] } else { 1.0 };
            config.ranks = args.ranks.clone();
            config.folds = args.folds;
            config.k_levels = args.k_levels.clone();
            config.rel_tolerance = args.tol;
            config.max_outer_iters = args.max_iters;
            config
        }
    };
    let (summary, replicates) = run_study(&config)?;
    let out = &args.out;
    write_json(&out.join("study_summary.json"), &summary)?;
    write_table_csv(&summary, out.join("study_table.csv"))?;
    write_replicates_csv(&replicates, out.join("replicates.csv"))?;
    fs::write(out.join("study_table.txt"), format_table(&summary))?;
    print!("{}", format_table(&summary));
    Ok(["study_summary.json", "study_table.csv", "replicates.csv", "study_table.txt"]
        .map(String::from)
        .to_vec())
}

/// Reads prediction input. Response columns are optional: they are used
/// only when all of them are present in the file.
fn load_prediction_data(args: &PredictArgs, model: &ModelFit) -> Result<MixedDataset> {
    let schema = match &args.schema {
        Some(path) => Schema::from_csv_path(path)?,
        None => Schema::new(model.predictor_schema.iter().chain(&model.response_schema).cloned().collect())?,
    };
    let headers = csv::Reader::from_path(&args.data)?.headers()?.clone();
    let has_responses = schema
        .responses()
        .all(|v| headers.iter().any(|h| h == v.name));
    let schema = if has_responses {
        schema
    } else {
        Schema::new(schema.variables.into_iter().filter(|v| v.role == Role::Predictor).collect())?
    };
    MixedDataset::from_csv_path(&args.data, &schema)
}

fn cmd_predict(args: &PredictArgs) -> Result<Vec<String>> {
    let model = ModelFit::load(&args.model)?;
    let data = load_prediction_data(args, &model)?;
    let policy = if args.allow_unseen { UnseenCategory::Zero } else { UnseenCategory::Reject };
    let predictions = model.predict(&data, policy)?;
    let kinds = model.response_kinds();

    let mut w = csv::Writer::from_path(args.out.join("predictions.csv"))?;
    w.write_record(["row", "response", "theta", "value", "category", "probabilities"])?;
    for (i, row) in predictions.rows.iter().enumerate() {
        for (r, p) in row.iter().enumerate() {
            let labels = &model.response_schema[r].categories;
            let (category, probabilities) = match kinds[r] {
                ResponseKind::Numeric => (String::new(), String::new()),
                ResponseKind::Binary => {
                    let label = if p.value >= 0.5 { &labels[1] } else { &labels[0] };
                    (label.clone(), format!("{}|{}", 1.0 - p.value, p.value))
                }
                ResponseKind::Ordinal => (
                    labels[p.value as usize - 1].clone(),
                    p.probabilities
                        .as_deref()
                        .unwrap_or(&[])
                        .iter()
                        .map(f64::to_string)
                        .collect::<Vec<_>>()
                        .join("|"),
                ),
            };
            w.write_record([
                (i + 1).to_string(),
                predictions.response_names[r].clone(),
                p.theta.to_string(),
                p.value.to_string(),
                category,
                probabilities,
            ])?;
        }
    }
    w.flush()?;
    let mut outputs = vec!["predictions.csv".to_string()];
    if !data.responses.is_empty() && data.n_rows() > 0 {
        let loss = model.heldout_loss(&data, policy)?;
        write_json(&args.out.join("heldout_loss.json"), &loss)?;
        outputs.push("heldout_loss.json".into());
    }
    Ok(outputs)
}

fn cmd_report(args: &ReportArgs) -> Result<Vec<String>> {
    let model = ModelFit::load(&args.model)?;
    let mut outputs = write_model_artifacts(&model, &args.out)?;
    let report = model_report(&model)?;
    write_json(&args.out.join("report.json"), &report)?;
    outputs.push("report.json".into());
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(outputs)
}

/// Headline figures of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub rank: usize,
    pub penalty: PenaltySpec,
    pub n_parameters: usize,
    pub active_predictors: Vec<String>,
    pub inactive_predictors: Vec<String>,
    pub sigma2: Option<f64>,
    pub penalized_loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub empty_categories: Vec<(String, Vec<usize>)>,
    pub skipped_quantification_updates: usize,
}

pub fn model_report(model: &ModelFit) -> Result<ModelReport> {
    let schema = Schema::new(model.predictor_schema.iter().chain(&model.response_schema).cloned().collect())?;
    let (active, inactive): (Vec<_>, Vec<_>) = model
        .predictor_schema
        .iter()
        .enumerate()
        .partition(|(p, _)| model.b.row(*p).iter().any(|&x| x != 0.0));
    Ok(ModelReport {
        rank: model.rank(),
        penalty: model.config.penalty,
        n_parameters: count_parameters(&schema, model.rank())?,
        active_predictors: active.into_iter().map(|(_, v)| v.name.clone()).collect(),
        inactive_predictors: inactive.into_iter().map(|(_, v)| v.name.clone()).collect(),
        sigma2: model.sigma2,
        penalized_loss: model.loss.total,
        converged: model.converged,
        iterations: model.iterations,
        empty_categories: model
            .response_schema
            .iter()
            .zip(&model.empty_categories)
            .filter(|(_, e)| !e.is_empty())
            .map(|(v, e)| (v.name.clone(), e.clone()))
            .collect(),
        skipped_quantification_updates: model.skipped_quantification_updates,
    })
}

fn dimension_header(first: &str, rank: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=rank).map(|s| format!("dim{s}")))
        .collect()
}

/// Writes the model JSON and its tables; returns the file names.
pub fn write_model_artifacts(model: &ModelFit, dir: &Path) -> Result<Vec<String>> {
    let predictors: Vec<&str> = model.predictor_schema.iter().map(|v| v.name.as_str()).collect();
    let responses: Vec<&str> = model.response_schema.iter().map(|v| v.name.as_str()).collect();
    model.save(dir.join("model.json"))?;

    let matrix_csv = |name: &str, header: Vec<String>, labels: &[&str], m: &nalgebra::DMatrix<f64>| -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(name))?;
        w.write_record(&header)?;
        for (i, label) in labels.iter().enumerate() {
            w.write_record(std::iter::once(label.to_string()).chain(m.row(i).iter().map(f64::to_string)))?;
        }
        w.flush()?;
        Ok(())
    };
    matrix_csv("B.csv", dimension_header("predictor", model.rank()), &predictors, &model.b)?;
    matrix_csv("V.csv", dimension_header("response", model.rank()), &responses, &model.v)?;
    let implied_header = std::iter::once("predictor".to_string())
        .chain(responses.iter().map(|s| s.to_string()))
        .collect();
    matrix_csv("implied_coefficients.csv", implied_header, &predictors, &model.implied_coefficients())?;

    let mut w = csv::Writer::from_path(dir.join("m.csv"))?;
    w.write_record(["response", "intercept"])?;
    for (name, m) in responses.iter().zip(&model.m) {
        w.write_record([name.to_string(), m.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("thresholds.csv"))?;
    w.write_record(["response", "index", "between", "threshold"])?;
    for (v, t) in model.response_schema.iter().zip(&model.thresholds) {
        for (j, value) in t.iter().flatten().enumerate() {
            let between = format!("{}|{}", v.categories[j], v.categories[j + 1]);
            w.write_record([v.name.clone(), (j + 1).to_string(), between, value.to_string()])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("quantifications.csv"))?;
    w.write_record(["predictor", "kind", "code", "category", "quantification", "observed"])?;
    for (v, t) in model.predictor_schema.iter().zip(&model.transforms) {
        if let PredictorTransform::Quantified(q) = t {
            for (c, (value, seen)) in q.values.iter().zip(&q.observed).enumerate() {
                w.write_record([
                    v.name.clone(),
                    v.kind.as_str().to_string(),
                    (c + 1).to_string(),
                    v.categories[c].clone(),
                    value.to_string(),
                    seen.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    w.write_record(["iteration", "penalized_loss"])?;
    for (i, loss) in model.trace.iter().enumerate() {
        w.write_record([i.to_string(), loss.to_string()])?;
    }
    w.flush()?;

    Ok([
        "model.json",
        "B.csv",
        "V.csv",
        "implied_coefficients.csv",
        "m.csv",
        "thresholds.csv",
        "quantifications.csv",
        "trace.csv",
    ]
    .map(String::from)
    .to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("3, 1,1").unwrap(), vec![1.0, 3.0]);
        assert!(parse_grid("a:b").is_err());
        assert!(parse_grid("1:0").is_err());
    }

    #[test]
    fn help_exits_cleanly_and_bad_flags_are_input_errors() {
        assert_eq!(run(["mixed-rrr", "--help"]), EXIT_OK);
        assert_eq!(run(["mixed-rrr", "fit", "--bogus"]), EXIT_INPUT);
    }

    #[test]
    fn error_document_is_json() {
        let doc = error_document(&Error::EmptyFeasibleSet, EXIT_INTERNAL);
        let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
        assert_eq!(v["error"], "EmptyFeasibleSet");
        assert_eq!(v["exit_code"], 1);
    }
}
