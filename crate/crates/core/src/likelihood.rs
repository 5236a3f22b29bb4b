//! Canonical parameters, per-family negative log-likelihoods, their
//! derivatives, and the quadratic majorization that turns every MM step into
//! a least-squares problem.
//!
//! Ordinal responses use the cumulative logit link
//! `P(y <= c) = σ(t_c - θ)`, so the category mass is
//! `π_c = σ(t_c - θ) - σ(t_{c-1} - θ)` with `t_0 = -∞`, `t_C = +∞`.
//! Log-masses are evaluated through the factorisation
//! `π_c = σ(u)·σ(-l)·(1 - e^{l-u})` (with `u = t_c - θ`, `l = t_{c-1} - θ`),
//! which is stable for any θ.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to reported ordinal category probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Upper bound on the second derivative of the binary logistic loss.
pub const BINARY_CURVATURE: f64 = 0.25;

/// Upper bound on the second derivative of the cumulative-logit loss.
///
/// For an interior category the curvature is `f(u) + f(l)` with
/// `f = σ(1 - σ)`, which approaches 1/2 as the two thresholds meet.
pub const ORDINAL_CURVATURE: f64 = 0.5;

/// Response families supported by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Numeric,
    Binary,
    Ordinal,
}

/// Family parameters needed to evaluate one response column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family<'a> {
    Numeric { sigma2: f64 },
    Binary,
    /// Strictly increasing thresholds, length `C - 1`.
    Ordinal { thresholds: &'a [f64] },
}

impl Family<'_> {
    pub fn kind(&self) -> ResponseKind {
        match self {
            Family::Numeric { .. } => ResponseKind::Numeric,
            Family::Binary => ResponseKind::Binary,
            Family::Ordinal { .. } => ResponseKind::Ordinal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Family::Numeric { sigma2 } if !(*sigma2 > 0.0 && sigma2.is_finite()) => {
                Err(Error::InvalidFamily(format!("sigma2 must be positive, got {sigma2}")))
            }
            Family::Ordinal { thresholds } => {
                if thresholds.is_empty() {
                    return Err(Error::InvalidFamily("ordinal response needs thresholds".into()));
                }
                if thresholds.iter().any(|t| !t.is_finite())
                    || thresholds.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(Error::InvalidFamily(
                        "thresholds must be finite and strictly increasing".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Logistic function `1 / (1 + e^{-x})`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log σ(x)`.
pub fn log_logistic(x: f64) -> f64 {
    -softplus(-x)
}

/// Bounds of the observed category interval `(l, u) = (t_{c-1} - θ, t_c - θ)`.
fn interval(theta: f64, thresholds: &[f64], category: usize) -> (f64, f64) {
    let c = thresholds.len() + 1;
    let lower = if category == 1 {
        f64::NEG_INFINITY
    } else {
        thresholds[category - 2] - theta
    };
    let upper = if category == c {
        f64::INFINITY
    } else {
        thresholds[category - 1] - theta
    };
    (lower, upper)
}

/// `log π_c` for a 1-based category `c`.
pub fn ordinal_log_prob(theta: f64, thresholds: &[f64], category: usize) -> f64 {
    let (l, u) = interval(theta, thresholds, category);
    match (l.is_finite(), u.is_finite()) {
        (false, false) => 0.0,
        (false, true) => log_logistic(u),
        (true, false) => log_logistic(-l),
        (true, true) => log_logistic(u) + log_logistic(-l) + (-(l - u).exp_m1()).ln(),
    }
}

/// Category probabilities under the cumulative logit link, floored at
/// [`PROB_FLOOR`] and renormalized.
pub fn ordinal_category_probs(theta: f64, thresholds: &[f64]) -> Vec<f64> {
    let c = thresholds.len() + 1;
    let mut probs: Vec<f64> = (1..=c)
        .map(|k| ordinal_log_prob(theta, thresholds, k).exp().max(PROB_FLOOR))
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    probs
}

/// Category `c` (1-based) with `t_{c-1} <= θ < t_c`; a θ exactly on a
/// threshold belongs to the upper category.
pub fn predict_ordinal_category(theta: f64, thresholds: &[f64]) -> usize {
    1 + thresholds.iter().filter(|&&t| t <= theta).count()
}

/// Negative log-likelihood of a single entry.
pub fn entry_loss(family: &Family<'_>, y: f64, theta: f64) -> f64 {
    match family {
        Family::Numeric { sigma2 } => {
            (y - theta).powi(2) / (2.0 * sigma2) + 0.5 * (2.0 * std::f64::consts::PI * sigma2).ln()
        }
        Family::Binary => {
            let q = 2.0 * y - 1.0;
            softplus(-q * theta)
        }
        Family::Ordinal { thresholds } => -ordinal_log_prob(theta, thresholds, y as usize),
    }
}

/// First derivative of [`entry_loss`] in θ.
pub fn entry_gradient(family: &Family<'_>, y: f64, theta: f64) -> f64 {
    match family {
        Family::Numeric { sigma2 } => (theta - y) / sigma2,
        Family::Binary => {
            let q = 2.0 * y - 1.0;
            -q * logistic(-q * theta)
        }
        Family::Ordinal { thresholds } => {
            let (l, u) = interval(theta, thresholds, y as usize);
            let fu = if u.is_finite() { logistic(u) } else { 1.0 };
            let fl = if l.is_finite() { logistic(l) } else { 0.0 };
            1.0 - fu - fl
        }
    }
}

/// Second derivative of [`entry_loss`] in θ.
pub fn entry_curvature(family: &Family<'_>, y: f64, theta: f64) -> f64 {
    let density = |x: f64| {
        if x.is_finite() {
            let s = logistic(x);
            s * (1.0 - s)
        } else {
            0.0
        }
    };
    match family {
        Family::Numeric { sigma2 } => 1.0 / sigma2,
        Family::Binary => density(theta),
        Family::Ordinal { thresholds } => {
            let (l, u) = interval(theta, thresholds, y as usize);
            density(u) + density(l)
        }
    }
}

fn check_column(family: &Family<'_>, y: &[f64], theta: &[f64]) -> Result<()> {
    family.validate()?;
    if y.len() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} rows, canonical parameter has {}",
            y.len(),
            theta.len()
        )));
    }
    if let Family::Ordinal { thresholds } = family {
        let c = thresholds.len() + 1;
        if let Some(bad) = y.iter().find(|&&v| v < 1.0 || v > c as f64 || v.fract() != 0.0) {
            return Err(Error::InvalidFamily(format!(
                "ordinal value {bad} outside 1..={c}"
            )));
        }
    }
    if let Family::Binary = family {
        if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidFamily(format!("binary value {bad} is not 0/1")));
        }
    }
    Ok(())
}

/// Summed negative log-likelihood of one response column.
pub fn response_loss(family: &Family<'_>, y: &[f64], theta: &[f64]) -> Result<f64> {
    check_column(family, y, theta)?;
    Ok(y.iter()
        .zip(theta)
        .map(|(&yi, &ti)| entry_loss(family, yi, ti))
        .sum())
}

/// Gradient column `ξ_r = ∂L_r/∂θ_r`.
pub fn loss_gradient(family: &Family<'_>, y: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
    check_column(family, y, theta)?;
    Ok(y.iter()
        .zip(theta)
        .map(|(&yi, &ti)| entry_gradient(family, yi, ti))
        .collect())
}

/// `κ* = max(1/4, σ^{-2})`, the uniform curvature constant for numeric and
/// binary entries.
pub fn kappa_star(sigma2: Option<f64>) -> f64 {
    match sigma2 {
        Some(s) => BINARY_CURVATURE.max(1.0 / s),
        None => BINARY_CURVATURE,
    }
}

/// Smallest uniform curvature constant that majorizes every entry of a
/// model with the given response families.
pub fn curvature_bound(kinds: &[ResponseKind], sigma2: Option<f64>) -> f64 {
    kinds
        .iter()
        .map(|k| match k {
            ResponseKind::Numeric => 1.0 / sigma2.unwrap_or(1.0),
            ResponseKind::Binary => BINARY_CURVATURE,
            ResponseKind::Ordinal => ORDINAL_CURVATURE,
        })
        .fold(0.0, f64::max)
}

/// Quadratic surrogate `L(ϑ) + ξ(ϑ)(θ - ϑ) + (κ/2)(θ - ϑ)²` of one entry.
pub fn majorizer(family: &Family<'_>, y: f64, support: f64, theta: f64, kappa: f64) -> f64 {
    let d = theta - support;
    entry_loss(family, y, support) + entry_gradient(family, y, support) * d + 0.5 * kappa * d * d
}

/// `Θ = 1 m' + Φ B V'`.
pub fn canonical_params(
    phi: &DMatrix<f64>,
    b: &DMatrix<f64>,
    v: &DMatrix<f64>,
    m: &[f64],
) -> Result<DMatrix<f64>> {
    if phi.ncols() != b.nrows() || b.ncols() != v.ncols() || v.nrows() != m.len() {
        return Err(Error::DimensionMismatch(format!(
            "Φ {}x{}, B {}x{}, V {}x{}, m {}",
            phi.nrows(),
            phi.ncols(),
            b.nrows(),
            b.ncols(),
            v.nrows(),
            v.ncols(),
            m.len()
        )));
    }
    let mut theta = phi * (b * v.transpose());
    for (r, &mr) in m.iter().enumerate() {
        theta.column_mut(r).add_scalar_mut(mr);
    }
    Ok(theta)
}

/// Working response `Z = Θ - Ξ / κ`.
pub fn working_response(theta: &DMatrix<f64>, gradients: &DMatrix<f64>, kappa: f64) -> DMatrix<f64> {
    theta - gradients / kappa
}

/// Penalized loss split into its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_response: Vec<f64>,
    pub structural: f64,
    pub penalty: f64,
}

impl LossBreakdown {
    pub fn new(per_response: Vec<f64>, penalty: f64) -> Self {
        let structural = per_response.iter().sum();
        Self {
            total: structural + penalty,
            per_response,
            structural,
            penalty,
        }
    }
}
