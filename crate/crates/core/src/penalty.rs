//! Lasso, ridge and group-lasso penalties on the score matrix `B` and their
//! quadratic majorization.
//!
//! Diagonal entries follow the column-major `vec(B)` order
//! `(b_11, …, b_P1, b_12, …)`, matching `(V ⊗ Φ) vec(B) = vec(Φ B V')`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard for the reciprocal weights of the lasso and group-lasso majorizers.
pub const DEFAULT_EPSILON: f64 = 1e-10;

/// Which sparsity penalty a tuning parameter `λ` refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    Lasso,
    Ridge,
    GroupLasso,
}

impl PenaltyKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "lasso" | "l1" => Ok(PenaltyKind::Lasso),
            "ridge" | "l2" => Ok(PenaltyKind::Ridge),
            "group_lasso" | "group" => Ok(PenaltyKind::GroupLasso),
            other => Err(Error::InvalidPenalty(format!("unknown penalty kind `{other}`"))),
        }
    }
}

/// Penalty weights `(λ1, λ2, λ3)` for lasso, ridge and group lasso.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lasso: f64,
    pub ridge: f64,
    pub group: f64,
    pub epsilon: f64,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        Self::none()
    }
}

impl PenaltySpec {
    pub fn none() -> Self {
        Self {
            lasso: 0.0,
            ridge: 0.0,
            group: 0.0,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn new(lasso: f64, ridge: f64, group: f64) -> Result<Self> {
        let spec = Self {
            lasso,
            ridge,
            group,
            epsilon: DEFAULT_EPSILON,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Penalty of the given kind at strength `lambda`, with a fixed companion
    /// ridge term (ignored when the kind itself is ridge).
    pub fn from_kind(kind: PenaltyKind, lambda: f64, companion_ridge: f64) -> Result<Self> {
        match kind {
            PenaltyKind::Lasso => Self::new(lambda, companion_ridge, 0.0),
            PenaltyKind::Ridge => Self::new(0.0, lambda, 0.0),
            PenaltyKind::GroupLasso => Self::new(0.0, companion_ridge, lambda),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("lambda1", self.lasso), ("lambda2", self.ridge), ("lambda3", self.group)] {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::InvalidPenalty(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidPenalty("epsilon must be positive".into()));
        }
        if self.lasso > 0.0 && self.group > 0.0 {
            return Err(Error::InvalidPenaltyCombination);
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.lasso == 0.0 && self.ridge == 0.0 && self.group == 0.0
    }
}

fn row_norms(b: &DMatrix<f64>) -> Vec<f64> {
    (0..b.nrows()).map(|p| b.row(p).norm()).collect()
}

/// `P(B) = λ1 Σ|b_ps| + λ2 Σ b_ps² + λ3 Σ_p ‖b_p‖₂`.
pub fn penalty_value(b: &DMatrix<f64>, spec: &PenaltySpec) -> Result<f64> {
    spec.validate()?;
    let mut total = 0.0;
    if spec.lasso > 0.0 {
        total += spec.lasso * b.iter().map(|x| x.abs()).sum::<f64>();
    }
    if spec.ridge > 0.0 {
        total += spec.ridge * b.iter().map(|x| x * x).sum::<f64>();
    }
    if spec.group > 0.0 {
        total += spec.group * row_norms(b).iter().sum::<f64>();
    }
    Ok(total)
}

/// Diagonal of the quadratic penalty majorizer, stored in `vec(B)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorizationDiagonal {
    pub entries: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
}

impl MajorizationDiagonal {
    pub fn get(&self, p: usize, s: usize) -> f64 {
        self.entries[s * self.n_rows + p]
    }

    /// Entries belonging to column `s` of `B`.
    pub fn column(&self, s: usize) -> &[f64] {
        &self.entries[s * self.n_rows..(s + 1) * self.n_rows]
    }

    /// `vec(B)' D vec(B)`.
    pub fn quadratic_form(&self, b: &DMatrix<f64>) -> f64 {
        b.iter().zip(&self.entries).map(|(x, d)| d * x * x).sum()
    }
}

/// `D = (λ1/2) D1 + λ2 I + (λ3/2) D3` at the support point `B0`.
pub fn majorization_diagonal(b0: &DMatrix<f64>, spec: &PenaltySpec) -> MajorizationDiagonal {
    let (p_dim, s_dim) = b0.shape();
    let norms = row_norms(b0);
    let eps = spec.epsilon;
    let mut entries = Vec::with_capacity(p_dim * s_dim);
    for s in 0..s_dim {
        for p in 0..p_dim {
            let mut d = spec.ridge;
            if spec.lasso > 0.0 {
                d += 0.5 * spec.lasso / b0[(p, s)].abs().max(eps);
            }
            if spec.group > 0.0 {
                d += 0.5 * spec.group / norms[p].max(eps);
            }
            entries.push(d);
        }
    }
    MajorizationDiagonal {
        entries,
        n_rows: p_dim,
        n_cols: s_dim,
    }
}

/// Additive constant making `vec(B)' D vec(B) + c` touch `P(B)` at `B0`.
pub fn majorizer_constant(b0: &DMatrix<f64>, spec: &PenaltySpec) -> f64 {
    let eps = spec.epsilon;
    let mut c = 0.0;
    if spec.lasso > 0.0 {
        c += 0.5 * spec.lasso * b0.iter().map(|x| x.abs().max(eps)).sum::<f64>();
    }
    if spec.group > 0.0 {
        c += 0.5 * spec.group * row_norms(b0).iter().map(|x| x.max(eps)).sum::<f64>();
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn penalty_values() {
        let zero = DMatrix::zeros(3, 2);
        let spec = PenaltySpec::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(penalty_value(&zero, &spec).unwrap(), 0.0);

        let row = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let group = PenaltySpec::new(0.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(penalty_value(&row, &group).unwrap(), 5.0, epsilon = 1e-15);

        let b = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let elastic = PenaltySpec::new(2.0, 0.5, 0.0).unwrap();
        assert_abs_diff_eq!(penalty_value(&b, &elastic).unwrap(), 8.5, epsilon = 1e-15);
    }

    #[test]
    fn lasso_and_group_cannot_combine() {
        assert!(matches!(PenaltySpec::new(1.0, 0.0, 1.0), Err(Error::InvalidPenaltyCombination)));
        assert!(PenaltySpec::new(1.0, 1.0, 0.0).is_ok());
        assert!(PenaltySpec::new(0.0, 1.0, 1.0).is_ok());
        assert!(PenaltySpec::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn diagonal_cases() {
        let b0 = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        let ridge = majorization_diagonal(&b0, &PenaltySpec::new(0.0, 0.7, 0.0).unwrap());
        assert!(ridge.entries.iter().all(|&d| d == 0.7));

        let group = majorization_diagonal(&b0, &PenaltySpec::new(0.0, 0.0, 2.0).unwrap());
        assert_abs_diff_eq!(group.get(0, 0), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(group.get(0, 1), 0.2, epsilon = 1e-15);

        let lasso = majorization_diagonal(&b0, &PenaltySpec::new(1.0, 0.3, 0.0).unwrap());
        assert_abs_diff_eq!(lasso.get(1, 0), 0.5 / DEFAULT_EPSILON + 0.3, epsilon = 1e-3);
        assert!(lasso.entries.iter().all(|d| d.is_finite() && *d >= 0.3));
        // column-major layout
        assert_abs_diff_eq!(lasso.entries[1], lasso.get(1, 0));
        assert_abs_diff_eq!(lasso.entries[2], lasso.get(0, 1));
    }

    fn matrix(p: usize, s: usize) -> impl Strategy<Value = DMatrix<f64>> {
        prop::collection::vec(-3.0f64..3.0, p * s).prop_map(move |v| DMatrix::from_vec(p, s, v))
    }

    proptest! {
        #[test]
        fn quadratic_majorizer_dominates(
            b in matrix(4, 3),
            b0 in matrix(4, 3),
            l1 in 0.0f64..5.0,
            l2 in 0.0f64..5.0,
            l3 in 0.0f64..5.0,
            use_group in any::<bool>(),
        ) {
            let spec = if use_group {
                PenaltySpec::new(0.0, l2, l3).unwrap()
            } else {
                PenaltySpec::new(l1, l2, 0.0).unwrap()
            };
            prop_assume!(b0.iter().all(|x| x.abs() > 1e-3));
            let d = majorization_diagonal(&b0, &spec);
            let c = majorizer_constant(&b0, &spec);
            let surrogate = d.quadratic_form(&b) + c;
            prop_assert!(surrogate >= penalty_value(&b, &spec).unwrap() - 1e-9);
            let at_support = d.quadratic_form(&b0) + c;
            prop_assert!((at_support - penalty_value(&b0, &spec).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn diagonal_increases_with_lambda(b0 in matrix(3, 2), l in 0.1f64..5.0, bump in 0.1f64..2.0) {
            prop_assume!(b0.iter().all(|x| x.abs() > 1e-3));
            for make in [
                |x: f64| PenaltySpec::new(x, 0.0, 0.0).unwrap(),
                |x: f64| PenaltySpec::new(0.0, x, 0.0).unwrap(),
                |x: f64| PenaltySpec::new(0.0, 0.0, x).unwrap(),
            ] {
                let lo = majorization_diagonal(&b0, &make(l));
                let hi = majorization_diagonal(&b0, &make(l + bump));
                for (a, b) in lo.entries.iter().zip(&hi.entries) {
                    prop_assert!(b > a);
                }
            }
        }
    }
}
