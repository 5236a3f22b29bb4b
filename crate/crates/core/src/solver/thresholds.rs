//! Maximum-likelihood thresholds of a cumulative-logit response with the
//! canonical parameters held fixed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{logistic, ordinal_log_prob};

const GRADIENT_TOLERANCE: f64 = 1e-8;
const MAX_NEWTON_STEPS: usize = 200;
const MAX_POLISH_STEPS: usize = 4;
/// Spacing used to place thresholds of categories absent from the data.
const INTERIOR_GAP: f64 = 1e-3;
const TAIL_GAP: f64 = 20.0;

/// Estimated thresholds together with the categories that were empty and
/// merged with their lower neighbour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    pub thresholds: Vec<f64>,
    /// 1-based categories with no observations.
    pub empty_categories: Vec<usize>,
    pub gradient_norm: f64,
}

fn negative_log_likelihood(codes: &[usize], theta: &[f64], tau: &[f64]) -> f64 {
    codes
        .iter()
        .zip(theta)
        .map(|(&c, &t)| -ordinal_log_prob(t, tau, c))
        .sum()
}

/// Gradient and tridiagonal Hessian of the threshold likelihood.
fn derivatives(codes: &[usize], theta: &[f64], tau: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let k = tau.len();
    let mut grad = DVector::zeros(k);
    let mut hess = DMatrix::zeros(k, k);
    for (&c, &th) in codes.iter().zip(theta) {
        // index of the upper threshold of category c is c-1, lower is c-2 (0-based)
        let has_upper = c <= k;
        let has_lower = c >= 2;
        let u = if has_upper { tau[c - 1] - th } else { f64::INFINITY };
        let l = if has_lower { tau[c - 2] - th } else { f64::NEG_INFINITY };
        let gap = if has_upper && has_lower {
            -(l - u).exp_m1()
        } else {
            1.0
        };
        if has_upper {
            // f(u)/π
            let lower_tail = if has_lower { logistic(-l) } else { 1.0 };
            let gu = logistic(-u) / (lower_tail * gap);
            grad[c - 1] -= gu;
            hess[(c - 1, c - 1)] += gu * gu - gu * (1.0 - 2.0 * logistic(u));
            if has_lower {
                let gl = logistic(l) / (logistic(u) * gap);
                hess[(c - 1, c - 2)] -= gu * gl;
                hess[(c - 2, c - 1)] -= gu * gl;
            }
        }
        if has_lower {
            let upper_tail = if has_upper { logistic(u) } else { 1.0 };
            let gl = logistic(l) / (upper_tail * gap);
            grad[c - 2] += gl;
            hess[(c - 2, c - 2)] += gl * gl + gl * (1.0 - 2.0 * logistic(l));
        }
    }
    (grad, hess)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Damped Newton iterations on strictly increasing thresholds.
fn newton(codes: &[usize], theta: &[f64], start: Vec<f64>) -> (Vec<f64>, f64) {
    let mut tau = start;
    let mut f = negative_log_likelihood(codes, theta, &tau);
    let mut gnorm = f64::INFINITY;
    let mut polish_steps = 0;
    for _ in 0..MAX_NEWTON_STEPS {
        let (g, mut h) = derivatives(codes, theta, &tau);
        gnorm = g.amax();
        if gnorm < GRADIENT_TOLERANCE {
            break;
        }
        let step = loop {
            if let Some(chol) = h.clone().cholesky() {
                break -chol.solve(&g);
            }
            let bump = 1e-8 * (1.0 + h.diagonal().amax());
            for i in 0..h.nrows() {
                h[(i, i)] += bump;
            }
        };
        let slope = g.dot(&step);
        // inside the quadratic region the objective can no longer resolve
        // the decrease, so full steps are taken on the gradient alone
        if -slope < 1e-9 * (1.0 + f.abs()) {
            let trial: Vec<f64> = tau.iter().zip(step.iter()).map(|(t, d)| t + d).collect();
            if !trial.windows(2).all(|w| w[0] < w[1]) || polish_steps == MAX_POLISH_STEPS {
                break;
            }
            polish_steps += 1;
            tau = trial;
            f = negative_log_likelihood(codes, theta, &tau);
            continue;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha > 1e-14 {
            let trial: Vec<f64> = tau.iter().zip(step.iter()).map(|(t, d)| t + alpha * d).collect();
            if trial.windows(2).all(|w| w[0] < w[1]) && trial.iter().all(|t| t.is_finite()) {
                let ft = negative_log_likelihood(codes, theta, &trial);
                if ft <= f + 1e-4 * alpha * slope {
                    tau = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (tau, gnorm)
}

/// Minimizes the cumulative-logit likelihood of `codes` (1-based, in
/// `1..=n_categories`) over the thresholds, with `theta` fixed.
///
/// Empty categories are merged with their lower neighbour for estimation;
/// their thresholds are then placed just below the next estimated one (or
/// far out in the tails) so the returned vector stays strictly increasing.
pub fn update_thresholds(
    name: &str,
    codes: &[usize],
    theta: &[f64],
    n_categories: usize,
    warm_start: Option<&[f64]>,
) -> Result<ThresholdFit> {
    if codes.len() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} codes but {} canonical values",
            codes.len(),
            theta.len()
        )));
    }
    let mut counts = vec![0usize; n_categories];
    for &c in codes {
        if c == 0 || c > n_categories {
            return Err(Error::UnknownCategory {
                variable: name.to_string(),
                value: c.to_string(),
            });
        }
        counts[c - 1] += 1;
    }
    let observed: Vec<usize> = (1..=n_categories).filter(|&c| counts[c - 1] > 0).collect();
    if observed.len() < 2 {
        return Err(Error::EmptyCategory(name.to_string()));
    }
    let empty_categories: Vec<usize> = (1..=n_categories).filter(|&c| counts[c - 1] == 0).collect();

    // compressed problem over observed categories
    let mut position = vec![0usize; n_categories + 1];
    for (j, &c) in observed.iter().enumerate() {
        position[c] = j + 1;
    }
    let compressed: Vec<usize> = codes.iter().map(|&c| position[c]).collect();
    let k = observed.len() - 1;

    let start = match warm_start {
        Some(t) if t.len() == n_categories - 1 && empty_categories.is_empty() => t.to_vec(),
        _ => {
            let n = codes.len() as f64;
            let mean_theta = theta.iter().sum::<f64>() / n;
            let mut cum = 0usize;
            observed[..k]
                .iter()
                .map(|&c| {
                    cum += counts[c - 1];
                    mean_theta + logit(cum as f64 / n)
                })
                .collect()
        }
    };
    let (tau, gradient_norm) = newton(&compressed, theta, start);

    let mut thresholds = vec![f64::NAN; n_categories - 1];
    for j in 1..=k {
        let hi = observed[j];
        thresholds[hi - 2] = tau[j - 1];
        let lo = observed[j - 1];
        // thresholds of empty categories between lo and hi, below the boundary
        let inner = hi - 1 - lo;
        if inner > 0 {
            let floor = if j >= 2 { tau[j - 2] } else { tau[0] - TAIL_GAP };
            let gap = INTERIOR_GAP.min((tau[j - 1] - floor) / (inner as f64 + 1.0));
            for step in 1..=inner {
                thresholds[hi - 2 - step] = tau[j - 1] - gap * step as f64;
            }
        }
    }
    let first = observed[0];
    for idx in (1..first).rev() {
        thresholds[idx - 1] = tau[0] - TAIL_GAP * (first - idx) as f64;
    }
    let last = observed[k];
    for idx in last..n_categories {
        thresholds[idx - 1] = tau[k - 1] + TAIL_GAP * (idx - last + 1) as f64;
    }
    debug_assert!(thresholds.windows(2).all(|w| w[0] < w[1]));

    Ok(ThresholdFit {
        thresholds,
        empty_categories,
        gradient_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn balanced_binary_as_ordinal_gives_zero() {
        let codes = [1, 2, 1, 2, 1, 2];
        let fit = update_thresholds("y", &codes, &[0.0; 6], 2, None).unwrap();
        assert_abs_diff_eq!(fit.thresholds[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_theta_matches_cumulative_logits() {
        let codes = [1, 1, 2, 3, 3, 3, 2, 4, 4, 1, 3, 3];
        let theta = [0.7; 12];
        let fit = update_thresholds("y", &codes, &theta, 4, None).unwrap();
        let n = codes.len() as f64;
        let mut cum = 0.0;
        for c in 1..=3 {
            cum += codes.iter().filter(|&&k| k == c).count() as f64;
            let expected = 0.7 + logit(cum / n);
            assert_abs_diff_eq!(fit.thresholds[c - 1], expected, epsilon = 1e-8);
        }
        assert!(fit.gradient_norm < 1e-8);
    }

    #[test]
    fn gradient_vanishes_for_varying_theta() {
        let codes = [1, 2, 3, 4, 2, 3, 1, 4, 3, 2, 2, 3];
        let theta: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let fit = update_thresholds("y", &codes, &theta, 4, None).unwrap();
        let (g, _) = derivatives(&codes, &theta, &fit.thresholds);
        assert!(g.amax() < 1e-8);
        assert!(fit.thresholds.windows(2).all(|w| w[0] < w[1]));
        // finite-difference check of the analytic gradient at a generic point
        let tau = [-0.8, 0.1, 0.9];
        let (g, h) = derivatives(&codes, &theta, &tau);
        for j in 0..3 {
            let mut plus = tau;
            let mut minus = tau;
            plus[j] += 1e-6;
            minus[j] -= 1e-6;
            let fd = (negative_log_likelihood(&codes, &theta, &plus)
                - negative_log_likelihood(&codes, &theta, &minus))
                / 2e-6;
            assert_abs_diff_eq!(fd, g[j], epsilon = 1e-6);
            let (gp, _) = derivatives(&codes, &theta, &plus);
            let (gm, _) = derivatives(&codes, &theta, &minus);
            for i in 0..3 {
                assert_abs_diff_eq!((gp[i] - gm[i]) / 2e-6, h[(i, j)], epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn empty_categories_are_merged() {
        let codes = [1, 1, 3, 3, 3, 5, 1, 3];
        let fit = update_thresholds("y", &codes, &[0.0; 8], 6, None).unwrap();
        assert_eq!(fit.empty_categories, vec![2, 4, 6]);
        assert_eq!(fit.thresholds.len(), 5);
        assert!(fit.thresholds.windows(2).all(|w| w[0] < w[1]));
        assert!(fit.thresholds.iter().all(|t| t.is_finite()));
        // the estimated boundaries between observed categories
        assert_abs_diff_eq!(fit.thresholds[1], logit(3.0 / 8.0), epsilon = 1e-8);
        assert_abs_diff_eq!(fit.thresholds[3], logit(7.0 / 8.0), epsilon = 1e-8);
    }

    #[test]
    fn single_observed_category_is_an_error() {
        assert!(matches!(
            update_thresholds("y", &[2, 2, 2], &[0.0; 3], 3, None),
            Err(Error::EmptyCategory(_))
        ));
    }
}
