//! Choice of rank and penalty strength by V-fold cross-validation and the
//! k-standard-error rule, plus parameter counting and model comparison.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MixedDataset, Schema, UnseenCategory, VariableKind};
use crate::error::{Error, Result};
use crate::model::ModelFit;
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::solver::{fit_from, FitConfig};

/// Evenly spaced grid `0, step, 2·step, …` up to and including `max`.
pub fn lambda_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= 0.0) {
        return Err(Error::InvalidConfig("grid needs step > 0 and max >= 0".into()));
    }
    let count = (max / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| i as f64 * step).collect())
}

/// Settings of a cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub ranks: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub kind: PenaltyKind,
    /// Ridge weight added to lasso and group-lasso penalties.
    pub companion_ridge: f64,
    pub folds: usize,
    pub seed: u64,
    pub max_outer_iters: usize,
    pub rel_tolerance: f64,
    pub threshold_update_period: usize,
    /// Start each fit from the solution at the previous grid value.
    pub warm_start: bool,
}

impl CvConfig {
    pub fn new(ranks: Vec<usize>, lambdas: Vec<f64>, kind: PenaltyKind) -> Self {
        Self {
            ranks,
            lambdas,
            kind,
            companion_ridge: 0.01,
            folds: 10,
            seed: 0,
            max_outer_iters: 2000,
            rel_tolerance: 1e-8,
            threshold_update_period: 1,
            warm_start: true,
        }
    }

    pub fn fit_config(&self, rank: usize, lambda: f64) -> Result<FitConfig> {
        let mut cfg = FitConfig::new(rank, PenaltySpec::from_kind(self.kind, lambda, self.companion_ridge)?);
        cfg.max_outer_iters = self.max_outer_iters;
        cfg.rel_tolerance = self.rel_tolerance;
        cfg.threshold_update_period = self.threshold_update_period;
        cfg.seed = self.seed;
        Ok(cfg)
    }

    fn validate(&self, n_rows: usize) -> Result<()> {
        if self.folds < 2 || self.folds > n_rows {
            return Err(Error::InvalidConfig(format!(
                "fold count {} must lie in 2..={n_rows}",
                self.folds
            )));
        }
        if self.ranks.is_empty() || self.lambdas.is_empty() {
            return Err(Error::InvalidConfig("rank and lambda grids must be non-empty".into()));
        }
        if self.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidConfig("lambdas must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Fold label `0..folds` of every row: a seeded shuffle cut into
/// near-equal consecutive blocks.
pub fn fold_assignment(n_rows: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n_rows];
    for (pos, &row) in order.iter().enumerate() {
        label[row] = pos * folds / n_rows;
    }
    label
}

/// A fit that failed inside the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub rank: usize,
    pub lambda: f64,
    pub fold: usize,
    pub error: String,
}

/// Cross-validated losses over ranks × lambdas × folds. Cells are indexed
/// `[rank index][lambda index]`; failed cells hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVGrid {
    pub ranks: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    /// Held-out mean loss per observation (summed over responses).
    pub fold_losses: Vec<Vec<Vec<f64>>>,
    pub cv_mean: Vec<Vec<f64>>,
    pub cv_se: Vec<Vec<f64>>,
    /// Mean loss per observation-response pair.
    pub cv_mean_per_entry: Vec<Vec<f64>>,
    pub failures: Vec<CellFailure>,
    /// Held-out rows that met a category unseen in their training folds.
    pub unseen_rows: usize,
}

/// Mean and standard error `SD / √V` of fold losses.
pub fn mean_and_standard_error(losses: &[f64]) -> (f64, f64) {
    let v = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / v;
    if losses.len() < 2 {
        return (mean, 0.0);
    }
    let var = losses.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v - 1.0);
    (mean, var.sqrt() / v.sqrt())
}

struct PathResult {
    rank_idx: usize,
    fold: usize,
    losses: Vec<Option<(f64, f64)>>,
    failures: Vec<CellFailure>,
    unseen_rows: usize,
}

fn run_path(
    train: &MixedDataset,
    test: &MixedDataset,
    rank_idx: usize,
    fold: usize,
    config: &CvConfig,
    order: &[usize],
) -> PathResult {
    let rank = config.ranks[rank_idx];
    let mut losses = vec![None; config.lambdas.len()];
    let mut failures = Vec::new();
    let mut unseen_rows = 0;
    let mut previous: Option<ModelFit> = None;
    let mut last: Option<(f64, usize)> = None;
    for &li in order {
        let lambda = config.lambdas[li];
        // repeated grid values reuse the cell just computed
        if let Some((l, idx)) = last {
            if l == lambda {
                losses[li] = losses[idx];
                continue;
            }
        }
        last = Some((lambda, li));
        let outcome = config.fit_config(rank, lambda).and_then(|cfg| {
            let start = if config.warm_start { previous.as_ref() } else { None };
            let model = fit_from(train, &cfg, start)?;
            let held = model.heldout_loss(test, UnseenCategory::Zero)?;
            Ok((model, held))
        });
        match outcome {
            Ok((model, held)) => {
                unseen_rows += held.unseen_rows;
                losses[li] = Some((held.per_observation(), held.per_entry()));
                previous = Some(model);
            }
            Err(e) => {
                failures.push(CellFailure {
                    rank,
                    lambda,
                    fold,
                    error: e.to_string(),
                });
                previous = None;
                last = None;
            }
        }
    }
    PathResult {
        rank_idx,
        fold,
        losses,
        failures,
        unseen_rows,
    }
}

/// V-fold cross-validation of every `(rank, λ)` pair.
///
/// Paths over λ (ascending) for each rank and fold run in parallel; the
/// reduction is by index, so results do not depend on scheduling.
pub fn cross_validate(data: &MixedDataset, config: &CvConfig) -> Result<CVGrid> {
    let n = data.n_rows();
    config.validate(n)?;
    let labels = fold_assignment(n, config.folds, config.seed);
    let splits: Vec<(MixedDataset, MixedDataset)> = (0..config.folds)
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
            (data.select_rows(&train), data.select_rows(&test))
        })
        .collect();
    let mut order: Vec<usize> = (0..config.lambdas.len()).collect();
    order.sort_by(|&a, &b| config.lambdas[a].total_cmp(&config.lambdas[b]).then(a.cmp(&b)));

    let jobs: Vec<(usize, usize)> = (0..config.ranks.len())
        .flat_map(|r| (0..config.folds).map(move |f| (r, f)))
        .collect();
    let results: Vec<PathResult> = jobs
        .par_iter()
        .map(|&(r, f)| run_path(&splits[f].0, &splits[f].1, r, f, config, &order))
        .collect();

    let (nr, nl, nf) = (config.ranks.len(), config.lambdas.len(), config.folds);
    let mut fold_losses = vec![vec![vec![f64::NAN; nf]; nl]; nr];
    let mut entry_losses = vec![vec![vec![f64::NAN; nf]; nl]; nr];
    let mut failures = Vec::new();
    let mut unseen_rows = 0;
    for res in results {
        for (li, loss) in res.losses.iter().enumerate() {
            if let Some((obs, entry)) = loss {
                fold_losses[res.rank_idx][li][res.fold] = *obs;
                entry_losses[res.rank_idx][li][res.fold] = *entry;
            }
        }
        failures.extend(res.failures);
        unseen_rows += res.unseen_rows;
    }
    let summarize = |cells: &Vec<Vec<Vec<f64>>>| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut means = vec![vec![f64::NAN; nl]; nr];
        let mut ses = vec![vec![f64::NAN; nl]; nr];
        for r in 0..nr {
            for l in 0..nl {
                let folds = &cells[r][l];
                if folds.iter().all(|x| x.is_finite()) {
                    let (mean, se) = mean_and_standard_error(folds);
                    means[r][l] = mean;
                    ses[r][l] = se;
                }
            }
        }
        (means, ses)
    };
    let (cv_mean, cv_se) = summarize(&fold_losses);
    let (cv_mean_per_entry, _) = summarize(&entry_losses);
    Ok(CVGrid {
        ranks: config.ranks.clone(),
        lambdas: config.lambdas.clone(),
        folds: nf,
        seed: config.seed,
        fold_losses,
        cv_mean,
        cv_se,
        cv_mean_per_entry,
        failures,
        unseen_rows,
    })
}

/// Model chosen by the k-standard-error rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KseChoice {
    pub k: f64,
    pub threshold: f64,
    pub rank: usize,
    pub lambda: f64,
    pub cv: f64,
}

/// Per-rank minimum of the CV curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMinimum {
    pub rank: usize,
    pub lambda_min: f64,
    pub ape: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub s_star: usize,
    pub lambda_min: f64,
    pub cv_min: f64,
    pub se_min: f64,
    pub lambda_kse: Vec<KseChoice>,
    pub ape_at: Vec<RankMinimum>,
}

impl SelectionResult {
    pub fn choice(&self, k: f64) -> Option<&KseChoice> {
        self.lambda_kse.iter().find(|c| c.k == k)
    }
}

/// Preference among cells: larger λ first, then smaller rank.
fn preferred(a: (usize, f64), b: (usize, f64)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

/// `(S*, λ*)` as the global minimum of the CV grid, then for every `k` the
/// largest λ among ranks `<= S*` whose CV value is within
/// `CV(λ*, S*) + k·SE(λ*, S*)`.
pub fn select_models(grid: &CVGrid, ks: &[f64]) -> Result<SelectionResult> {
    let mut best: Option<(usize, usize)> = None;
    for (ri, row) in grid.cv_mean.iter().enumerate() {
        for (li, &cv) in row.iter().enumerate() {
            if !cv.is_finite() {
                continue;
            }
            best = match best {
                None => Some((ri, li)),
                Some((br, bl)) => {
                    let current = grid.cv_mean[br][bl];
                    let better = cv < current
                        || (cv == current
                            && preferred((grid.ranks[ri], grid.lambdas[li]), (grid.ranks[br], grid.lambdas[bl])));
                    if better {
                        Some((ri, li))
                    } else {
                        Some((br, bl))
                    }
                }
            };
        }
    }
    let (br, bl) = best.ok_or(Error::EmptyFeasibleSet)?;
    let s_star = grid.ranks[br];
    let cv_min = grid.cv_mean[br][bl];
    let se_min = grid.cv_se[br][bl];

    let mut lambda_kse = Vec::with_capacity(ks.len());
    for &k in ks {
        if !(k >= 0.0) {
            return Err(Error::InvalidConfig(format!("k must be >= 0, got {k}")));
        }
        let threshold = cv_min + k * se_min;
        let mut chosen: Option<(usize, usize)> = None;
        for (ri, &rank) in grid.ranks.iter().enumerate() {
            if rank > s_star {
                continue;
            }
            for (li, &lambda) in grid.lambdas.iter().enumerate() {
                let cv = grid.cv_mean[ri][li];
                if !(cv <= threshold) {
                    continue;
                }
                chosen = match chosen {
                    Some((cr, cl)) if !preferred((rank, lambda), (grid.ranks[cr], grid.lambdas[cl])) => Some((cr, cl)),
                    _ => Some((ri, li)),
                };
            }
        }
        let (cr, cl) = chosen.ok_or(Error::EmptyFeasibleSet)?;
        lambda_kse.push(KseChoice {
            k,
            threshold,
            rank: grid.ranks[cr],
            lambda: grid.lambdas[cl],
            cv: grid.cv_mean[cr][cl],
        });
    }

    let ape_at = grid
        .ranks
        .iter()
        .enumerate()
        .filter_map(|(ri, &rank)| {
            let li = (0..grid.lambdas.len())
                .filter(|&li| grid.cv_mean[ri][li].is_finite())
                .min_by(|&a, &b| {
                    grid.cv_mean[ri][a]
                        .total_cmp(&grid.cv_mean[ri][b])
                        .then(grid.lambdas[b].total_cmp(&grid.lambdas[a]))
                })?;
            Some(RankMinimum {
                rank,
                lambda_min: grid.lambdas[li],
                ape: grid.cv_mean[ri][li],
                se: grid.cv_se[ri][li],
            })
        })
        .collect();

    Ok(SelectionResult {
        s_star,
        lambda_min: grid.lambdas[bl],
        cv_min,
        se_min,
        lambda_kse,
        ape_at,
    })
}

/// Number of free parameters of a rank-`S` model:
/// `(P + R - S)·S`, plus `C_p - 2` per categorical predictor, one intercept
/// per numeric or binary response and `C_r - 1` thresholds per ordinal one.
pub fn count_parameters(schema: &Schema, rank: usize) -> Result<usize> {
    let p = schema.predictors().count();
    let r = schema.responses().count();
    if rank == 0 || rank > p.min(r) {
        return Err(Error::InvalidConfig(format!("rank {rank} must lie in 1..={}", p.min(r))));
    }
    let structural = (p + r - rank) * rank;
    let quantifications: usize = schema
        .predictors()
        .filter(|v| v.kind.is_discrete())
        .map(|v| v.n_categories().saturating_sub(2))
        .sum();
    let response_terms: usize = schema
        .responses()
        .map(|v| match v.kind {
            VariableKind::Ordinal => v.n_categories() - 1,
            _ => 1,
        })
        .sum();
    Ok(structural + quantifications + response_terms)
}

/// Mean squared difference between the implied coefficient matrices `BV'`
/// of two fits.
pub fn implied_coefficient_mse(a: &ModelFit, b: &ModelFit) -> Result<f64> {
    let (x, y) = (a.implied_coefficients(), b.implied_coefficients());
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch(format!(
            "implied coefficients {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    Ok((x - y).norm_squared() / (a.b.nrows() * a.v.nrows()) as f64)
}

/// Writes one row per `(S, lambda, fold)` with its held-out loss.
pub fn write_fold_csv(grid: &CVGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["S", "lambda", "fold", "loss"])?;
    for (ri, &rank) in grid.ranks.iter().enumerate() {
        for (li, &lambda) in grid.lambdas.iter().enumerate() {
            for (f, &loss) in grid.fold_losses[ri][li].iter().enumerate() {
                w.write_record([rank.to_string(), lambda.to_string(), (f + 1).to_string(), loss.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// CV curve per rank: mean ± standard error at every λ.
pub fn write_curve_csv(grid: &CVGrid, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["S", "lambda", "ape", "se", "lower", "upper", "ape_per_entry"])?;
    for (ri, &rank) in grid.ranks.iter().enumerate() {
        for (li, &lambda) in grid.lambdas.iter().enumerate() {
            let (m, se) = (grid.cv_mean[ri][li], grid.cv_se[ri][li]);
            w.write_record([
                rank.to_string(),
                lambda.to_string(),
                m.to_string(),
                se.to_string(),
                (m - se).to_string(),
                (m + se).to_string(),
                grid.cv_mean_per_entry[ri][li].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary document of a selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub ranks: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
    pub n_lambdas: usize,
    pub failures: Vec<CellFailure>,
    pub unseen_rows: usize,
    pub selection: SelectionResult,
}

impl SelectionSummary {
    pub fn new(grid: &CVGrid, selection: SelectionResult) -> Self {
        Self {
            ranks: grid.ranks.clone(),
            folds: grid.folds,
            seed: grid.seed,
            n_lambdas: grid.lambdas.len(),
            failures: grid.failures.clone(),
            unseen_rows: grid.unseen_rows,
            selection,
        }
    }
}
