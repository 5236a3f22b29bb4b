//! Monte-Carlo study of variable selection on synthetic mixed data with a
//! known sparse coefficient structure.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnValues, MixedDataset, Role, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::likelihood::logistic;
use crate::penalty::PenaltyKind;
use crate::selection::{cross_validate, lambda_grid, select_models, CvConfig};
use crate::solver::{fit, FitConfig};

/// Standard-normal quartiles used to cut Gaussian draws into four levels.
const QUARTILES: [f64; 3] = [-0.674_489_750_196_081_7, 0.0, 0.674_489_750_196_081_7];
/// Thresholds of the generated four-category ordinal responses.
const RESPONSE_THRESHOLDS: [f64; 3] = [-2.0, 0.0, 2.0];
const INFORMATIVE: usize = 10;
const TRUE_RANK: usize = 2;

fn default_replications() -> usize {
    20
}
fn default_threshold() -> f64 {
    0.01
}
fn default_ridge() -> f64 {
    0.01
}
fn default_coefficient_range() -> (f64, f64) {
    (0.5, 1.0)
}

/// One simulation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    /// Number of uninformative predictors.
    pub noise: usize,
    /// Number of responses, split evenly over numeric, binary and ordinal.
    pub responses: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// Predictors whose largest `|b_ps|` exceeds this count as selected.
    #[serde(default = "default_threshold")]
    pub selection_threshold: f64,
    /// Magnitude range of nonzero entries of the true `B`.
    #[serde(default = "default_coefficient_range")]
    pub coefficient_range: (f64, f64),
}

impl Scenario {
    pub fn new(n: usize, noise: usize, responses: usize) -> Self {
        Self {
            n,
            noise,
            responses,
            replications: default_replications(),
            seed: 0,
            selection_threshold: default_threshold(),
            coefficient_range: default_coefficient_range(),
        }
    }

    pub fn label(&self) -> String {
        format!("n{}_noise{}_R{}", self.n, self.noise, self.responses)
    }

    pub fn n_predictors(&self) -> usize {
        INFORMATIVE + self.noise
    }

    pub fn validate(&self) -> Result<()> {
        if self.responses < 3 || !self.responses.is_multiple_of(3) {
            return Err(Error::InvalidConfig(format!(
                "response count {} must be a positive multiple of 3",
                self.responses
            )));
        }
        if self.n < 20 {
            return Err(Error::InvalidConfig("sample size must be at least 20".into()));
        }
        let (lo, hi) = self.coefficient_range;
        if !(0.0 < lo && lo <= hi) || !(self.selection_threshold > 0.0) {
            return Err(Error::InvalidConfig("invalid coefficient range or threshold".into()));
        }
        Ok(())
    }
}

/// Broad type of a predictor for per-type metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorType {
    Continuous,
    Discrete,
}

/// A generated data set and the predictors that truly enter the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub dataset: MixedDataset,
    pub true_support: Vec<bool>,
    pub predictor_types: Vec<PredictorType>,
    /// True implied coefficients `B V'` on the generating scale.
    pub true_coefficients: DMatrix<f64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn quartile_code(x: f64) -> usize {
    1 + QUARTILES.iter().filter(|&&q| q <= x).count()
}

fn level_labels(c: usize) -> Vec<String> {
    (1..=c).map(|k| k.to_string()).collect()
}

/// Draws one data set.
///
/// Predictors: five standard normals, three Bernoulli(0.5) binaries and two
/// quartile-cut four-level ordinals carry the signal; the noise block is half
/// standard normal, half quartile-cut ordinal. The true `B` has rank two with
/// nonzero rows `±U(lo, hi)` on the informative block and `V` is a random
/// orthonormal matrix. Responses are numeric (`θ + N(0,1)`), binary
/// (`Bernoulli(σ(θ))`) and four-category cumulative logit with thresholds
/// `(-2, 0, 2)`, one third each.
pub fn generate_dataset(scenario: &Scenario, replicate_seed: u64) -> Result<SimulatedData> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed);
    let n = scenario.n;
    let p = scenario.n_predictors();
    let r = scenario.responses;

    let mut predictors = Vec::with_capacity(p);
    let mut design = DMatrix::zeros(n, p);
    let mut types = Vec::with_capacity(p);
    // (kind, name prefix) per predictor
    let mut layout: Vec<(VariableKind, String)> = Vec::new();
    layout.extend((1..=5).map(|i| (VariableKind::Numeric, format!("inf_num{i}"))));
    layout.extend((1..=3).map(|i| (VariableKind::Binary, format!("inf_bin{i}"))));
    layout.extend((1..=2).map(|i| (VariableKind::Ordinal, format!("inf_ord{i}"))));
    let noise_numeric = scenario.noise.div_ceil(2);
    layout.extend((1..=noise_numeric).map(|i| (VariableKind::Numeric, format!("noise_num{i}"))));
    layout.extend((1..=scenario.noise - noise_numeric).map(|i| (VariableKind::Ordinal, format!("noise_ord{i}"))));

    for (j, (kind, name)) in layout.into_iter().enumerate() {
        let column = match kind {
            VariableKind::Numeric => {
                let x: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
                design.column_mut(j).copy_from_slice(&x);
                types.push(PredictorType::Continuous);
                Column::new(VariableSchema::numeric(name, Role::Predictor), ColumnValues::Real(x))?
            }
            VariableKind::Binary => {
                let codes: Vec<usize> = (0..n).map(|_| 1 + usize::from(rng.gen_bool(0.5))).collect();
                for (i, &c) in codes.iter().enumerate() {
                    design[(i, j)] = 2.0 * c as f64 - 3.0;
                }
                types.push(PredictorType::Discrete);
                Column::new(
                    VariableSchema::categorical(name, VariableKind::Binary, ["0", "1"], Role::Predictor),
                    ColumnValues::Category(codes),
                )?
            }
            _ => {
                let codes: Vec<usize> = (0..n).map(|_| quartile_code(normal(&mut rng))).collect();
                for (i, &c) in codes.iter().enumerate() {
                    design[(i, j)] = (c as f64 - 2.5) / 1.25f64.sqrt();
                }
                types.push(PredictorType::Discrete);
                Column::new(
                    VariableSchema::categorical(name, VariableKind::Ordinal, level_labels(4), Role::Predictor),
                    ColumnValues::Category(codes),
                )?
            }
        };
        predictors.push(column);
    }

    let (lo, hi) = scenario.coefficient_range;
    let mut b = DMatrix::zeros(p, TRUE_RANK);
    for j in 0..INFORMATIVE {
        for s in 0..TRUE_RANK {
            let magnitude = rng.gen_range(lo..=hi);
            b[(j, s)] = if rng.gen_bool(0.5) { magnitude } else { -magnitude };
        }
    }
    let raw_v = DMatrix::from_fn(r, TRUE_RANK, |_, _| normal(&mut rng));
    let v = raw_v.qr().q();
    let coefficients = &b * v.transpose();
    let theta = &design * &coefficients;

    let per_type = r / 3;
    let mut responses = Vec::with_capacity(r);
    for k in 0..r {
        let col = theta.column(k);
        let column = if k < per_type {
            let y: Vec<f64> = col.iter().map(|t| t + normal(&mut rng)).collect();
            Column::new(VariableSchema::numeric(format!("y_num{}", k + 1), Role::Response), ColumnValues::Real(y))?
        } else if k < 2 * per_type {
            let codes: Vec<usize> = col.iter().map(|&t| 1 + usize::from(rng.gen_bool(logistic(t)))).collect();
            Column::new(
                VariableSchema::categorical(format!("y_bin{}", k + 1 - per_type), VariableKind::Binary, ["0", "1"], Role::Response),
                ColumnValues::Category(codes),
            )?
        } else {
            let codes: Vec<usize> = col
                .iter()
                .map(|&t| {
                    // latent logistic draw against the thresholds
                    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                    let latent = t + (u / (1.0 - u)).ln();
                    1 + RESPONSE_THRESHOLDS.iter().filter(|&&c| c <= latent).count()
                })
                .collect();
            Column::new(
                VariableSchema::categorical(
                    format!("y_ord{}", k + 1 - 2 * per_type),
                    VariableKind::Ordinal,
                    level_labels(4),
                    Role::Response,
                ),
                ColumnValues::Category(codes),
            )?
        };
        responses.push(column);
    }

    Ok(SimulatedData {
        dataset: MixedDataset::new(predictors, responses)?,
        true_support: (0..p).map(|j| j < INFORMATIVE).collect(),
        predictor_types: types,
        true_coefficients: coefficients,
    })
}

/// Small mixed data set for experiments and tests: predictor kinds cycle
/// through numeric, binary, nominal (3 levels) and ordinal (4 levels);
/// response kinds cycle through numeric, binary and ordinal (4 levels). All
/// responses depend on a random rank-two linear signal.
pub fn random_mixed_dataset(n: usize, p: usize, r: usize, seed: u64) -> Result<MixedDataset> {
    if n < 8 || p == 0 || r == 0 {
        return Err(Error::InvalidConfig("need n >= 8, p >= 1 and r >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut design = DMatrix::zeros(n, p);
    let mut predictors = Vec::with_capacity(p);
    for j in 0..p {
        let name = format!("x{}", j + 1);
        let latent: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let column = match j % 4 {
            0 => Column::new(VariableSchema::numeric(name, Role::Predictor), ColumnValues::Real(latent.clone()))?,
            1 => {
                let mut codes: Vec<usize> = latent.iter().map(|&x| 1 + usize::from(x > 0.0)).collect();
                // both levels must be present
                codes[0] = 1;
                codes[1] = 2;
                Column::new(
                    VariableSchema::categorical(name, VariableKind::Binary, ["no", "yes"], Role::Predictor),
                    ColumnValues::Category(codes),
                )?
            }
            2 => {
                let codes: Vec<usize> = latent.iter().map(|&x| 1 + usize::from(x > -0.4) + usize::from(x > 0.4)).collect();
                Column::new(
                    VariableSchema::categorical(name, VariableKind::Nominal, ["a", "b", "c"], Role::Predictor),
                    ColumnValues::Category(codes),
                )?
            }
            _ => Column::new(
                VariableSchema::categorical(name, VariableKind::Ordinal, level_labels(4), Role::Predictor),
                ColumnValues::Category(latent.iter().map(|&x| quartile_code(x)).collect()),
            )?,
        };
        for (i, x) in latent.iter().enumerate() {
            design[(i, j)] = match &column.values {
                ColumnValues::Category(codes) if j % 4 == 1 => 2.0 * codes[i] as f64 - 3.0,
                _ => *x,
            };
        }
        predictors.push(column);
    }
    let rank = TRUE_RANK.min(p).min(r);
    let b = DMatrix::from_fn(p, rank, |_, _| 0.8 * normal(&mut rng) / (p as f64).sqrt());
    let v = DMatrix::from_fn(r, rank, |_, _| normal(&mut rng)).qr().q();
    let theta = &design * (&b * v.transpose());

    let mut responses = Vec::with_capacity(r);
    for k in 0..r {
        let name = format!("y{}", k + 1);
        let col = theta.column(k);
        let column = match k % 3 {
            0 => Column::new(
                VariableSchema::numeric(name, Role::Response),
                ColumnValues::Real(col.iter().map(|t| 0.5 + t + normal(&mut rng)).collect()),
            )?,
            1 => Column::new(
                VariableSchema::categorical(name, VariableKind::Binary, ["no", "yes"], Role::Response),
                ColumnValues::Category(col.iter().map(|&t| 1 + usize::from(rng.gen_bool(logistic(t)))).collect()),
            )?,
            _ => {
                let mut codes: Vec<usize> = col
                    .iter()
                    .map(|&t| {
                        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                        let latent = t + (u / (1.0 - u)).ln();
                        1 + [-1.5, 0.0, 1.5].iter().filter(|&&c| c <= latent).count()
                    })
                    .collect();
                // make sure every category occurs
                for c in 1..=4 {
                    if !codes.contains(&c) {
                        codes[c - 1] = c;
                    }
                }
                Column::new(
                    VariableSchema::categorical(name, VariableKind::Ordinal, level_labels(4), Role::Response),
                    ColumnValues::Category(codes),
                )?
            }
        };
        responses.push(column);
    }
    MixedDataset::new(predictors, responses)
}

/// Counts and rates of a selection against the true support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tdr: f64,
    pub fdr: f64,
}

impl SelectionMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let tdr = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let fdr = if tp + fp == 0 { 0.0 } else { fp as f64 / (tp + fp) as f64 };
        Self { tp, fp, fn_, tdr, fdr }
    }
}

/// Indicator of predictors with `max_s |b_ps| > threshold`.
pub fn selected_predictors(b_hat: &DMatrix<f64>, threshold: f64) -> Vec<bool> {
    (0..b_hat.nrows())
        .map(|p| b_hat.row(p).iter().any(|x| x.abs() > threshold))
        .collect()
}

/// True and false discovery rates of the predictors selected from `b_hat`;
/// the false discovery rate is 0 when nothing is selected.
pub fn selection_metrics(b_hat: &DMatrix<f64>, true_support: &[bool], threshold: f64) -> Result<SelectionMetrics> {
    subset_metrics(b_hat, true_support, threshold, |_| true)
}

fn subset_metrics(
    b_hat: &DMatrix<f64>,
    true_support: &[bool],
    threshold: f64,
    include: impl Fn(usize) -> bool,
) -> Result<SelectionMetrics> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidConfig("selection threshold must be positive".into()));
    }
    if b_hat.nrows() != true_support.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficient rows for {} predictors",
            b_hat.nrows(),
            true_support.len()
        )));
    }
    let selected = selected_predictors(b_hat, threshold);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for p in (0..selected.len()).filter(|&p| include(p)) {
        match (selected[p], true_support[p]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(SelectionMetrics::from_counts(tp, fp, fn_))
}

fn default_grid_max() -> f64 {
    100.0
}
fn default_grid_step() -> f64 {
    2.5
}
fn default_ranks() -> Vec<usize> {
    vec![1, 2, 3]
}
fn default_folds() -> usize {
    10
}
fn default_k_levels() -> Vec<f64> {
    vec![1.0, 2.0, 3.0]
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    2000
}

/// Declarative study description, typically read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_grid_max")]
    pub grid_max: f64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_k_levels")]
    pub k_levels: Vec<f64>,
    /// Fixed ridge weight added to the group lasso.
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_tolerance")]
    pub rel_tolerance: f64,
    #[serde(default = "default_max_iters")]
    pub max_outer_iters: usize,
}

impl StudyConfig {
    pub fn new(scenarios: Vec<Scenario>) -> Self {
        Self {
            scenarios,
            grid_max: default_grid_max(),
            grid_step: default_grid_step(),
            ranks: default_ranks(),
            folds: default_folds(),
            k_levels: default_k_levels(),
            ridge: default_ridge(),
            rel_tolerance: default_tolerance(),
            max_outer_iters: default_max_iters(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::InvalidConfig("study has no scenarios".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        lambda_grid(self.grid_max, self.grid_step)?;
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return Err(Error::InvalidConfig("ranks must be positive".into()));
        }
        if self.k_levels.iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::InvalidConfig("k levels must be >= 0".into()));
        }
        Ok(())
    }

    /// Level labels: `min` followed by `{k}se` for every k.
    pub fn level_names(&self) -> Vec<String> {
        std::iter::once("min".to_string())
            .chain(self.k_levels.iter().map(|k| format!("{k}se")))
            .collect()
    }
}

/// Outcome at one penalization level of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelOutcome {
    pub level: String,
    pub rank: usize,
    pub lambda: f64,
    pub overall: SelectionMetrics,
    pub continuous: SelectionMetrics,
    pub discrete: SelectionMetrics,
}

/// Result of one replicate; `error` is set when it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub scenario: String,
    pub replicate: usize,
    pub seed: u64,
    pub levels: Vec<LevelOutcome>,
    pub cv_failures: usize,
    pub error: Option<String>,
}

/// Mean and standard deviation of a metric over replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, sd: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: String,
    pub tdr: MeanSd,
    pub fdr: MeanSd,
    pub tdr_continuous: MeanSd,
    pub fdr_continuous: MeanSd,
    pub tdr_discrete: MeanSd,
    pub fdr_discrete: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub label: String,
    pub completed: usize,
    pub failed: usize,
    pub levels: Vec<LevelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub config: StudyConfig,
    pub scenarios: Vec<ScenarioSummary>,
}

/// Seed of replicate `index` of a scenario.
pub fn replicate_seed(scenario: &Scenario, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(index as u64 + 1);
    rng.gen()
}

fn run_replicate(config: &StudyConfig, scenario: &Scenario, index: usize) -> ReplicateResult {
    let seed = replicate_seed(scenario, index);
    let mut result = ReplicateResult {
        scenario: scenario.label(),
        replicate: index,
        seed,
        levels: Vec::new(),
        cv_failures: 0,
        error: None,
    };
    if let Err(e) = replicate_levels(config, scenario, seed, &mut result) {
        result.levels.clear();
        result.error = Some(e.to_string());
    }
    result
}

fn replicate_levels(config: &StudyConfig, scenario: &Scenario, seed: u64, out: &mut ReplicateResult) -> Result<()> {
    let sim = generate_dataset(scenario, seed)?;
    let max_rank = scenario.n_predictors().min(scenario.responses);
    let ranks: Vec<usize> = config.ranks.iter().copied().filter(|&s| s <= max_rank).collect();
    let mut cv = CvConfig::new(ranks, lambda_grid(config.grid_max, config.grid_step)?, PenaltyKind::GroupLasso);
    cv.companion_ridge = config.ridge;
    cv.folds = config.folds;
    cv.seed = seed;
    cv.rel_tolerance = config.rel_tolerance;
    cv.max_outer_iters = config.max_outer_iters;
    let grid = cross_validate(&sim.dataset, &cv)?;
    out.cv_failures = grid.failures.len();
    let selection = select_models(&grid, &config.k_levels)?;

    let mut choices = vec![("min".to_string(), selection.s_star, selection.lambda_min)];
    for (name, c) in config.level_names().into_iter().skip(1).zip(&selection.lambda_kse) {
        choices.push((name, c.rank, c.lambda));
    }
    for (level, rank, lambda) in choices {
        let fit_config = FitConfig {
            max_outer_iters: config.max_outer_iters,
            rel_tolerance: config.rel_tolerance,
            ..cv.fit_config(rank, lambda)?
        };
        let model = fit(&sim.dataset, &fit_config)?;
        let t = scenario.selection_threshold;
        let of_type = |ty: PredictorType| {
            let types = &sim.predictor_types;
            subset_metrics(&model.b, &sim.true_support, t, move |p| types[p] == ty)
        };
        out.levels.push(LevelOutcome {
            level,
            rank,
            lambda,
            overall: selection_metrics(&model.b, &sim.true_support, t)?,
            continuous: of_type(PredictorType::Continuous)?,
            discrete: of_type(PredictorType::Discrete)?,
        });
    }
    Ok(())
}

/// Runs every replicate of every scenario. Replicates run in parallel and
/// are collected in index order, so results do not depend on scheduling.
pub fn run_study(config: &StudyConfig) -> Result<(StudySummary, Vec<ReplicateResult>)> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = config
        .scenarios
        .iter()
        .enumerate()
        .flat_map(|(si, s)| (0..s.replications).map(move |r| (si, r)))
        .collect();
    let replicates: Vec<ReplicateResult> = jobs
        .par_iter()
        .map(|&(si, r)| run_replicate(config, &config.scenarios[si], r))
        .collect();
    let summary = summarize(config, &replicates);
    Ok((summary, replicates))
}

/// Aggregates replicate outcomes per scenario and level; failed replicates
/// are counted and left out.
pub fn summarize(config: &StudyConfig, replicates: &[ReplicateResult]) -> StudySummary {
    let scenarios = config
        .scenarios
        .iter()
        .map(|scenario| {
            let label = scenario.label();
            let mine: Vec<&ReplicateResult> = replicates.iter().filter(|r| r.scenario == label).collect();
            let ok: Vec<&&ReplicateResult> = mine.iter().filter(|r| r.error.is_none()).collect();
            let levels = config
                .level_names()
                .into_iter()
                .map(|level| {
                    let outcomes: Vec<&LevelOutcome> = ok
                        .iter()
                        .filter_map(|r| r.levels.iter().find(|l| l.level == level))
                        .collect();
                    let stat = |f: &dyn Fn(&LevelOutcome) -> f64| {
                        MeanSd::of(&outcomes.iter().map(|o| f(o)).collect::<Vec<_>>())
                    };
                    LevelSummary {
                        tdr: stat(&|o| o.overall.tdr),
                        fdr: stat(&|o| o.overall.fdr),
                        tdr_continuous: stat(&|o| o.continuous.tdr),
                        fdr_continuous: stat(&|o| o.continuous.fdr),
                        tdr_discrete: stat(&|o| o.discrete.tdr),
                        fdr_discrete: stat(&|o| o.discrete.fdr),
                        level,
                    }
                })
                .collect();
            ScenarioSummary {
                scenario: scenario.clone(),
                label,
                completed: ok.len(),
                failed: mine.len() - ok.len(),
                levels,
            }
        })
        .collect();
    StudySummary {
        config: config.clone(),
        scenarios,
    }
}

/// One row per replicate and level, with the per-type split.
pub fn write_replicates_csv(replicates: &[ReplicateResult], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "replicate",
        "seed",
        "level",
        "rank",
        "lambda",
        "tdr",
        "fdr",
        "tdr_continuous",
        "fdr_continuous",
        "tdr_discrete",
        "fdr_discrete",
        "error",
    ])?;
    for r in replicates {
        if let Some(err) = &r.error {
            w.write_record([
                r.scenario.clone(),
                r.replicate.to_string(),
                r.seed.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                err.clone(),
            ])?;
            continue;
        }
        for l in &r.levels {
            w.write_record([
                r.scenario.clone(),
                r.replicate.to_string(),
                r.seed.to_string(),
                l.level.clone(),
                l.rank.to_string(),
                l.lambda.to_string(),
                l.overall.tdr.to_string(),
                l.overall.fdr.to_string(),
                l.continuous.tdr.to_string(),
                l.continuous.fdr.to_string(),
                l.discrete.tdr.to_string(),
                l.discrete.fdr.to_string(),
                String::new(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Scenario × level table of `mean (sd)` for TDR and FDR.
pub fn format_table(summary: &StudySummary) -> String {
    let mut out = String::from("scenario\tlevel\tTDR\tFDR\n");
    for s in &summary.scenarios {
        for l in &s.levels {
            out.push_str(&format!(
                "{}\t{}\t{:.2} ({:.2})\t{:.2} ({:.2})\n",
                s.label, l.level, l.tdr.mean, l.tdr.sd, l.fdr.mean, l.fdr.sd
            ));
        }
    }
    out
}

/// The same table as CSV, one row per scenario and level.
pub fn write_table_csv(summary: &StudySummary, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario", "n", "noise", "R", "level", "tdr_mean", "tdr_sd", "fdr_mean", "fdr_sd", "completed", "failed"])?;
    for s in &summary.scenarios {
        for l in &s.levels {
            w.write_record([
                s.label.clone(),
                s.scenario.n.to_string(),
                s.scenario.noise.to_string(),
                s.scenario.responses.to_string(),
                l.level.clone(),
                l.tdr.mean.to_string(),
                l.tdr.sd.to_string(),
                l.fdr.mean.to_string(),
                l.fdr.sd.to_string(),
                s.completed.to_string(),
                s.failed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_and_dimensions() {
        for noise in [10, 50] {
            let s = Scenario::new(60, noise, 6);
            let sim = generate_dataset(&s, 3).unwrap();
            assert_eq!(sim.true_support.iter().filter(|&&x| x).count(), 10);
            assert_eq!(sim.dataset.n_predictors(), 10 + noise);
            assert_eq!(sim.dataset.n_responses(), 6);
            assert_eq!(sim.dataset.n_rows(), 60);
            assert_eq!(sim.true_coefficients.rank(1e-9), 2);
            for p in 10..10 + noise {
                assert!(sim.true_coefficients.row(p).iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn generation_is_reproducible() {
        let s = Scenario::new(50, 10, 6);
        assert_eq!(generate_dataset(&s, 9).unwrap(), generate_dataset(&s, 9).unwrap());
        assert_ne!(generate_dataset(&s, 9).unwrap().dataset, generate_dataset(&s, 10).unwrap().dataset);
        assert_ne!(replicate_seed(&s, 0), replicate_seed(&s, 1));
    }

    #[test]
    fn metric_cases() {
        let support = [true, true, false, false];
        let zero = DMatrix::zeros(4, 2);
        let m = selection_metrics(&zero, &support, 0.01).unwrap();
        assert_eq!((m.tdr, m.fdr), (0.0, 0.0));

        let perfect = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.005, 0.0]);
        let m = selection_metrics(&perfect, &support, 0.01).unwrap();
        assert_eq!((m.tdr, m.fdr), (1.0, 0.0));

        let mut support = vec![false; 20];
        support[..10].iter_mut().for_each(|x| *x = true);
        let mut b = DMatrix::zeros(20, 1);
        for p in 0..15 {
            b[(p, 0)] = 0.1;
        }
        let m = selection_metrics(&b, &support, 0.01).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_), (10, 5, 0));
        assert!((m.fdr - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn study_config_from_toml() {
        let text = r#"
            grid_step = 5.0
            ranks = [1, 2]

            [[scenarios]]
            n = 100
            noise = 10
            responses = 6
            seed = 4
        "#;
        let cfg = StudyConfig::from_toml(text).unwrap();
        assert_eq!(cfg.scenarios[0].replications, 20);
        assert_eq!(cfg.grid_max, 100.0);
        assert_eq!(cfg.level_names(), vec!["min", "1se", "2se", "3se"]);
        assert!(StudyConfig::from_toml("scenarios = []").is_err());
    }
}
