//! Block-relaxation estimation of the penalized reduced-rank model.
//!
//! Each outer iteration majorizes the structural loss at the current
//! canonical parameters by a least-squares surrogate with working response
//! `Z = Θ - Ξ/κ`, then updates the intercepts, `B`, `V` and the
//! quantifications against that surrogate. The residual variance and the
//! ordinal thresholds are updated against the loss itself.

pub mod thresholds;
pub mod updates;

use log::debug;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    apply_quantification, build_indicator, rescale_quantification, ColumnValues, IndicatorMatrix,
    MixedDataset, NumericScaling, PredictorTransform, VariableKind,
};
use crate::error::{Error, Result};
use crate::likelihood::{
    canonical_params, curvature_bound, loss_gradient, response_loss, working_response, Family,
    LossBreakdown, ResponseKind,
};
use crate::model::ModelFit;
use crate::penalty::{majorization_diagonal, penalty_value, PenaltySpec};

pub use thresholds::{update_thresholds, ThresholdFit};
pub use updates::{
    sigma2_maximum_likelihood, update_b, update_intercepts, update_quantification, update_sigma2,
    update_v, SIGMA2_FLOOR,
};

/// Entries of `B` below this magnitude are stored as exact zeros.
pub const HARD_ZERO: f64 = 1e-8;

/// Settings of a single fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub rank: usize,
    pub penalty: PenaltySpec,
    pub max_outer_iters: usize,
    pub rel_tolerance: f64,
    pub seed: u64,
    /// Thresholds are re-estimated every this many outer iterations.
    pub threshold_update_period: usize,
}

impl FitConfig {
    pub fn new(rank: usize, penalty: PenaltySpec) -> Self {
        Self {
            rank,
            penalty,
            max_outer_iters: 2000,
            rel_tolerance: 1e-8,
            seed: 0,
            threshold_update_period: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n_predictors: usize, n_responses: usize) -> Result<()> {
        self.penalty.validate()?;
        if self.rank == 0 || self.rank > n_predictors.min(n_responses) {
            return Err(Error::InvalidConfig(format!(
                "rank {} must lie in 1..={}",
                self.rank,
                n_predictors.min(n_responses)
            )));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidConfig("max_outer_iters must be positive".into()));
        }
        if !(self.rel_tolerance > 0.0) {
            return Err(Error::InvalidConfig("rel_tolerance must be positive".into()));
        }
        if self.threshold_update_period == 0 {
            return Err(Error::InvalidConfig("threshold_update_period must be positive".into()));
        }
        Ok(())
    }
}

/// Response values as an `N × R` matrix: reals for numeric responses, 0/1
/// for binary ones and category codes `1..=C` for ordinal ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    pub y: DMatrix<f64>,
    pub kinds: Vec<ResponseKind>,
    pub names: Vec<String>,
    /// Category count of each ordinal response (0 otherwise).
    pub n_categories: Vec<usize>,
}

impl ResponseMatrix {
    pub fn from_dataset(data: &MixedDataset) -> Result<Self> {
        let n = data.n_rows();
        let mut y = DMatrix::zeros(n, data.n_responses());
        let mut kinds = Vec::new();
        let mut n_categories = Vec::new();
        for (r, col) in data.responses.iter().enumerate() {
            let (kind, cats) = match (col.schema.kind, &col.values) {
                (VariableKind::Numeric, ColumnValues::Real(v)) => {
                    y.column_mut(r).copy_from_slice(v);
                    (ResponseKind::Numeric, 0)
                }
                (VariableKind::Binary, ColumnValues::Category(c)) => {
                    for (i, &k) in c.iter().enumerate() {
                        y[(i, r)] = (k - 1) as f64;
                    }
                    (ResponseKind::Binary, 0)
                }
                (VariableKind::Ordinal, ColumnValues::Category(c)) => {
                    for (i, &k) in c.iter().enumerate() {
                        y[(i, r)] = k as f64;
                    }
                    (ResponseKind::Ordinal, col.schema.n_categories())
                }
                (kind, _) => {
                    return Err(Error::InvalidFamily(format!(
                        "response `{}` has unsupported kind {}",
                        col.schema.name,
                        kind.as_str()
                    )))
                }
            };
            kinds.push(kind);
            n_categories.push(cats);
        }
        Ok(Self {
            y,
            kinds,
            names: data.responses.iter().map(|c| c.schema.name.clone()).collect(),
            n_categories,
        })
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        self.kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == ResponseKind::Numeric)
            .map(|(r, _)| r)
            .collect()
    }

    /// Ordinal codes of response `r`.
    pub fn codes(&self, r: usize) -> Vec<usize> {
        self.y.column(r).iter().map(|&x| x as usize).collect()
    }
}

pub(crate) fn family<'a>(kind: ResponseKind, sigma2: Option<f64>, thresholds: &'a Option<Vec<f64>>) -> Family<'a> {
    match kind {
        ResponseKind::Numeric => Family::Numeric {
            sigma2: sigma2.unwrap_or(1.0),
        },
        ResponseKind::Binary => Family::Binary,
        ResponseKind::Ordinal => Family::Ordinal {
            thresholds: thresholds.as_deref().unwrap_or(&[]),
        },
    }
}

/// Negative log-likelihood of every response column.
pub(crate) fn response_losses(
    responses: &ResponseMatrix,
    theta: &DMatrix<f64>,
    sigma2: Option<f64>,
    thresholds: &[Option<Vec<f64>>],
) -> Result<Vec<f64>> {
    (0..responses.kinds.len())
        .map(|r| {
            let fam = family(responses.kinds[r], sigma2, &thresholds[r]);
            response_loss(&fam, responses.y.column(r).as_slice(), theta.column(r).as_slice())
        })
        .collect()
}

/// Mutable state of one discrete or numeric predictor during a fit.
struct PredictorState {
    indicator: Option<IndicatorMatrix>,
    transform: PredictorTransform,
}

fn init_predictors(
    data: &MixedDataset,
    rng: &mut ChaCha8Rng,
    start: Option<&ModelFit>,
) -> Result<(Vec<PredictorState>, DMatrix<f64>)> {
    let n = data.n_rows();
    let mut phi = DMatrix::zeros(n, data.n_predictors());
    let mut states = Vec::with_capacity(data.n_predictors());
    for (p, col) in data.predictors.iter().enumerate() {
        let name = &col.schema.name;
        let state = match &col.values {
            ColumnValues::Real(values) => {
                let scaling = NumericScaling::fit(name, values)?;
                phi.column_mut(p).copy_from_slice(&scaling.apply(values));
                PredictorState {
                    indicator: None,
                    transform: PredictorTransform::Standardized(scaling),
                }
            }
            ColumnValues::Category(codes) => {
                let c = col.schema.n_categories();
                let g = build_indicator(codes, c).map_err(|_| Error::UnknownCategory {
                    variable: name.clone(),
                    value: "out of range".into(),
                })?;
                let kind = col.schema.kind;
                // nominal draws are taken even on warm starts so the
                // generator stream does not depend on the start
                let drawn: Vec<f64> = (0..c).map(|_| StandardNormal.sample(rng)).collect();
                let warm = start.and_then(|s| match s.transforms.get(p) {
                    Some(PredictorTransform::Quantified(q)) if q.values.len() == c => {
                        rescale_quantification(&q.values, &g, kind).ok()
                    }
                    _ => None,
                });
                let q = match warm {
                    Some(q) => q,
                    None => {
                        let raw: Vec<f64> = match kind {
                            VariableKind::Nominal => drawn,
                            _ => (0..c).map(|k| k as f64).collect(),
                        };
                        rescale_quantification(&raw, &g, kind)
                            .map_err(|_| Error::ConstantColumn(name.clone()))?
                    }
                };
                phi.column_mut(p).copy_from_slice(&apply_quantification(&g, &q.values)?);
                PredictorState {
                    indicator: Some(g),
                    transform: PredictorTransform::Quantified(q),
                }
            }
        };
        states.push(state);
    }
    Ok((states, phi))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn marginal_intercepts(responses: &ResponseMatrix) -> Vec<f64> {
    let n = responses.y.nrows() as f64;
    responses
        .kinds
        .iter()
        .enumerate()
        .map(|(r, kind)| {
            let mean = responses.y.column(r).sum() / n;
            match kind {
                ResponseKind::Numeric => mean,
                ResponseKind::Binary => {
                    let guard = 0.5 / n;
                    logit(mean.clamp(guard, 1.0 - guard))
                }
                ResponseKind::Ordinal => 0.0,
            }
        })
        .collect()
}

/// Top right singular vectors of `Φ'Z̃`, or unit vectors when that matrix
/// carries no usable direction.
fn initial_loadings(phi: &DMatrix<f64>, z_tilde: &DMatrix<f64>, rank: usize) -> DMatrix<f64> {
    let r_dim = z_tilde.ncols();
    let fallback = || DMatrix::from_fn(r_dim, rank, |i, j| if i == j { 1.0 } else { 0.0 });
    let cross = phi.transpose() * z_tilde;
    if !(cross.amax() > 1e-12) {
        return fallback();
    }
    let svd = cross.svd(false, true);
    let Some(v_t) = svd.v_t else { return fallback() };
    if v_t.nrows() < rank || svd.singular_values[rank - 1] <= 1e-12 * svd.singular_values[0] {
        return fallback();
    }
    v_t.rows(0, rank).transpose()
}

fn add_intercepts(mut x: DMatrix<f64>, m: &[f64], sign: f64) -> DMatrix<f64> {
    for (r, &mr) in m.iter().enumerate() {
        x.column_mut(r).add_scalar_mut(sign * mr);
    }
    x
}

/// Fits the model from the default initialization.
pub fn fit(data: &MixedDataset, config: &FitConfig) -> Result<ModelFit> {
    fit_from(data, config, None)
}

/// Fits the model, optionally starting from the parameters of an earlier
/// fit on data with the same schema (a warm start along a penalty path).
pub fn fit_from(data: &MixedDataset, config: &FitConfig, start: Option<&ModelFit>) -> Result<ModelFit> {
    let n = data.n_rows();
    let (p_dim, r_dim, s_dim) = (data.n_predictors(), data.n_responses(), config.rank);
    config.validate(p_dim, r_dim)?;
    if n < 2 {
        return Err(Error::DimensionMismatch("at least two rows are needed".into()));
    }
    let responses = ResponseMatrix::from_dataset(data)?;
    let kinds = responses.kinds.clone();
    let numeric = responses.numeric_indices();
    let penalty = &config.penalty;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut states, mut phi) = init_predictors(data, &mut rng, start)?;
    let random_b = DMatrix::from_fn(p_dim, s_dim, |_, _| { let x: f64 = StandardNormal.sample(&mut rng); 0.01 * x });

    let compatible = start.filter(|s| s.b.shape() == (p_dim, s_dim) && s.v.shape() == (r_dim, s_dim));
    let mut m = compatible.map_or_else(|| marginal_intercepts(&responses), |s| s.m.clone());
    let mut sigma2 = if numeric.is_empty() {
        None
    } else if let Some(s) = compatible.and_then(|s| s.sigma2) {
        Some(s)
    } else {
        update_sigma2(&add_intercepts(responses.y.clone(), &m, -1.0), &numeric)
    };
    let mut thresholds: Vec<Option<Vec<f64>>> = vec![None; r_dim];
    let mut empty_categories: Vec<Vec<usize>> = vec![Vec::new(); r_dim];
    for r in 0..r_dim {
        if kinds[r] != ResponseKind::Ordinal {
            continue;
        }
        let warm = compatible.and_then(|s| s.thresholds[r].clone());
        let fitted = match warm {
            Some(t) if t.len() + 1 == responses.n_categories[r] => t,
            _ => {
                let tf = update_thresholds(
                    &responses.names[r],
                    &responses.codes(r),
                    &vec![0.0; n],
                    responses.n_categories[r],
                    None,
                )?;
                empty_categories[r] = tf.empty_categories;
                tf.thresholds
            }
        };
        thresholds[r] = Some(fitted);
    }

    let (mut b, mut v) = match compatible {
        Some(s) => (s.b.clone(), s.v.clone()),
        None => {
            let theta0 = add_intercepts(DMatrix::zeros(n, r_dim), &m, 1.0);
            let grads = gradients(&responses, &theta0, sigma2, &thresholds)?;
            let kappa = curvature_bound(&kinds, sigma2);
            let z_tilde = add_intercepts(working_response(&theta0, &grads, kappa), &m, -1.0);
            (random_b, initial_loadings(&phi, &z_tilde, s_dim))
        }
    };

    let evaluate = |phi: &DMatrix<f64>,
                    b: &DMatrix<f64>,
                    v: &DMatrix<f64>,
                    m: &[f64],
                    sigma2: Option<f64>,
                    thresholds: &[Option<Vec<f64>>]|
     -> Result<LossBreakdown> {
        let theta = canonical_params(phi, b, v, m)?;
        let per = response_losses(&responses, &theta, sigma2, thresholds)?;
        Ok(LossBreakdown::new(per, penalty_value(b, penalty)?))
    };

    let mut previous = evaluate(&phi, &b, &v, &m, sigma2, &thresholds)?.total;
    let mut trace = vec![previous];
    let mut converged = false;
    let mut iterations = 0;
    let mut skipped_quantifications = 0usize;

    for iter in 0..config.max_outer_iters {
        iterations = iter + 1;
        let theta = canonical_params(&phi, &b, &v, &m)?;
        let grads = gradients(&responses, &theta, sigma2, &thresholds)?;
        let kappa = curvature_bound(&kinds, sigma2);
        let z = working_response(&theta, &grads, kappa);

        let fitted = &phi * (&b * v.transpose());
        m = update_intercepts(&(&z - &fitted), &kinds);
        let z_tilde = add_intercepts(z, &m, -1.0);

        let d = majorization_diagonal(&b, penalty);
        b = update_b(&z_tilde, &phi, &v, &d, kappa)?;
        match update_v(&z_tilde, &phi, &b) {
            Ok(next) => v = next,
            Err(Error::DegenerateSvd) => {}
            Err(e) => return Err(e),
        }

        let a = &b * v.transpose();
        let mut residual = &z_tilde - &phi * &a;
        for (p, state) in states.iter_mut().enumerate() {
            let Some(g) = &state.indicator else { continue };
            let PredictorTransform::Quantified(current) = &state.transform else { continue };
            let a_p: Vec<f64> = a.row(p).iter().copied().collect();
            let old: Vec<f64> = phi.column(p).iter().copied().collect();
            let name = &data.predictors[p].schema.name;
            match update_quantification(&residual, &old, &a_p, g, current.kind, name) {
                Ok(Some(q)) => {
                    let new = apply_quantification(g, &q.values)?;
                    for i in 0..n {
                        let delta = new[i] - old[i];
                        for r in 0..r_dim {
                            residual[(i, r)] -= delta * a_p[r];
                        }
                    }
                    phi.column_mut(p).copy_from_slice(&new);
                    debug_assert!(q.kind != VariableKind::Ordinal || q.is_monotone());
                    state.transform = PredictorTransform::Quantified(q);
                }
                Ok(None) => {}
                Err(Error::DegenerateQuantification(_)) => skipped_quantifications += 1,
                Err(e) => return Err(e),
            }
        }

        let theta = canonical_params(&phi, &b, &v, &m)?;
        if let Some(current) = sigma2 {
            let residuals = &responses.y - &theta;
            if let Some(candidate) = update_sigma2(&residuals, &numeric) {
                let loss_at = |s: f64| -> Result<f64> {
                    numeric
                        .iter()
                        .map(|&r| {
                            response_loss(
                                &Family::Numeric { sigma2: s },
                                responses.y.column(r).as_slice(),
                                theta.column(r).as_slice(),
                            )
                        })
                        .sum()
                };
                if loss_at(candidate)? <= loss_at(current)? {
                    sigma2 = Some(candidate);
                }
            }
        }

        if (iter + 1) % config.threshold_update_period == 0 {
            for r in 0..r_dim {
                if kinds[r] != ResponseKind::Ordinal {
                    continue;
                }
                let codes = responses.codes(r);
                let theta_r = theta.column(r);
                let th = theta_r.as_slice();
                let tf = update_thresholds(
                    &responses.names[r],
                    &codes,
                    th,
                    responses.n_categories[r],
                    thresholds[r].as_deref(),
                )?;
                let y = responses.y.column(r);
                let old_loss = response_loss(&family(kinds[r], sigma2, &thresholds[r]), y.as_slice(), th)?;
                let candidate = Some(tf.thresholds);
                let new_loss = response_loss(&family(kinds[r], sigma2, &candidate), y.as_slice(), th)?;
                if new_loss <= old_loss {
                    thresholds[r] = candidate;
                    empty_categories[r] = tf.empty_categories;
                }
            }
        }

        let current = evaluate(&phi, &b, &v, &m, sigma2, &thresholds)?.total;
        trace.push(current);
        if !current.is_finite() {
            return Err(Error::NonDecreasingLoss {
                iteration: iterations,
                previous,
                current,
            });
        }
        if current - previous > 1e-7 * (1.0 + previous.abs()) {
            return Err(Error::NonDecreasingLoss {
                iteration: iterations,
                previous,
                current,
            });
        }
        let decrease = (previous - current) / (previous.abs() + 1.0);
        previous = current;
        if decrease < config.rel_tolerance {
            converged = true;
            break;
        }
    }
    debug!("fit finished after {iterations} iterations (converged: {converged})");

    // report-ready form: exact zeros, ordered dimensions, fixed signs
    b.iter_mut().filter(|x| x.abs() < HARD_ZERO).for_each(|x| *x = 0.0);
    let (b, v) = canonical_orientation(&phi, b, v);
    let loss = evaluate(&phi, &b, &v, &m, sigma2, &thresholds)?;

    Ok(ModelFit {
        predictor_schema: data.predictors.iter().map(|c| c.schema.clone()).collect(),
        response_schema: data.responses.iter().map(|c| c.schema.clone()).collect(),
        transforms: states.into_iter().map(|s| s.transform).collect(),
        b,
        v,
        m,
        sigma2,
        thresholds,
        empty_categories,
        config: config.clone(),
        trace,
        converged,
        iterations,
        loss,
        skipped_quantification_updates: skipped_quantifications,
    })
}

fn gradients(
    responses: &ResponseMatrix,
    theta: &DMatrix<f64>,
    sigma2: Option<f64>,
    thresholds: &[Option<Vec<f64>>],
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(theta.nrows(), theta.ncols());
    for (r, t) in thresholds.iter().enumerate().take(theta.ncols()) {
        let fam = family(responses.kinds[r], sigma2, t);
        let g = loss_gradient(&fam, responses.y.column(r).as_slice(), theta.column(r).as_slice())?;
        out.column_mut(r).copy_from_slice(&g);
    }
    Ok(out)
}

/// Orders latent dimensions by decreasing norm of `Φ b_s` and flips signs so
/// the largest-magnitude entry of each loading column is positive. `B V'` is
/// unchanged.
pub fn canonical_orientation(phi: &DMatrix<f64>, b: DMatrix<f64>, v: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let scores = phi * &b;
    let mut order: Vec<usize> = (0..b.ncols()).collect();
    let norms: Vec<f64> = order.iter().map(|&s| scores.column(s).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let mut b_out = DMatrix::zeros(b.nrows(), b.ncols());
    let mut v_out = DMatrix::zeros(v.nrows(), v.ncols());
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let pivot = col.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        b_out.set_column(dst, &(b.column(src) * sign));
        v_out.set_column(dst, &(col * sign));
    }
    (b_out, v_out)
}
