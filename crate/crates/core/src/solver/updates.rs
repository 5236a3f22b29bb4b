//! Block updates of the MM surrogate `(κ/2)‖Z̃ - Φ B V'‖² + vec(B)' D vec(B)`.

use nalgebra::{DMatrix, DVector};

use crate::data::{rescale_quantification, IndicatorMatrix, Quantification, VariableKind};
use crate::error::{Error, Result};
use crate::isotonic::monotone_regression;
use crate::likelihood::ResponseKind;
use crate::penalty::MajorizationDiagonal;

/// Floor on the residual variance.
pub const SIGMA2_FLOOR: f64 = 1e-8;

/// Penalized least-squares update of `B`.
///
/// Solves `(κ (I_S ⊗ Φ'Φ) + 2D) vec(B) = κ (V ⊗ Φ)' vec(Z̃)`. Because `D`
/// is diagonal and `V'V = I`, the system is block diagonal: column `s` of
/// `B` solves `(κ Φ'Φ + 2 diag(D_s)) b_s = κ Φ' Z̃ v_s`.
pub fn update_b(
    z_tilde: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    v: &DMatrix<f64>,
    d: &MajorizationDiagonal,
    kappa: f64,
) -> Result<DMatrix<f64>> {
    let p = phi.ncols();
    let s_dim = v.ncols();
    if z_tilde.nrows() != phi.nrows() || z_tilde.ncols() != v.nrows() || d.n_rows != p || d.n_cols != s_dim {
        return Err(Error::DimensionMismatch("update_b operands are not conformable".into()));
    }
    let gram = phi.transpose() * phi * kappa;
    let rhs = phi.transpose() * (z_tilde * v) * kappa;
    let mut b = DMatrix::zeros(p, s_dim);
    for s in 0..s_dim {
        let mut lhs = gram.clone();
        for (j, dj) in d.column(s).iter().enumerate() {
            lhs[(j, j)] += 2.0 * dj;
        }
        let chol = lhs.cholesky().ok_or_else(|| {
            Error::SingularSystem(format!("normal equations for latent dimension {}", s + 1))
        })?;
        let col = chol.solve(&rhs.column(s).into_owned());
        if col.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem(format!(
                "non-finite solution for latent dimension {}",
                s + 1
            )));
        }
        b.set_column(s, &col);
    }
    Ok(b)
}

/// Orthogonal Procrustes update of the loadings: with the SVD
/// `B'Φ'Z̃ = P Δ Q'`, returns `V = Q_S P_S'`.
pub fn update_v(z_tilde: &DMatrix<f64>, phi: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cross = b.transpose() * phi.transpose() * z_tilde;
    if cross.nrows() > cross.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "rank {} exceeds the number of responses {}",
            cross.nrows(),
            cross.ncols()
        )));
    }
    let largest = cross.amax();
    if !(largest > 1e-300) || !largest.is_finite() {
        return Err(Error::DegenerateSvd);
    }
    let svd = cross.svd(true, true);
    let u = svd.u.ok_or(Error::DegenerateSvd)?;
    let v_t = svd.v_t.ok_or(Error::DegenerateSvd)?;
    if svd.singular_values.max() <= 0.0 {
        return Err(Error::DegenerateSvd);
    }
    Ok(v_t.transpose() * u.transpose())
}

/// Column means of `Z - Φ B V'` for numeric and binary responses; zero for
/// ordinal responses, whose location is carried by the thresholds.
pub fn update_intercepts(z_minus_fit: &DMatrix<f64>, kinds: &[ResponseKind]) -> Vec<f64> {
    let n = z_minus_fit.nrows() as f64;
    kinds
        .iter()
        .enumerate()
        .map(|(r, kind)| match kind {
            ResponseKind::Ordinal => 0.0,
            _ => z_minus_fit.column(r).sum() / n,
        })
        .collect()
}

/// `σ² = Σ_i Σ_{r∈N} e²_ir / (N·R_N - 1)`, floored at [`SIGMA2_FLOOR`].
pub fn update_sigma2(residuals: &DMatrix<f64>, numeric: &[usize]) -> Option<f64> {
    if numeric.is_empty() {
        return None;
    }
    let ss: f64 = numeric.iter().map(|&r| residuals.column(r).norm_squared()).sum();
    let count = (residuals.nrows() * numeric.len()) as f64;
    Some((ss / (count - 1.0).max(1.0)).max(SIGMA2_FLOOR))
}

/// Maximum-likelihood variance `Σ e² / (N·R_N)`, the exact minimizer of the
/// numeric loss in `σ²`.
pub fn sigma2_maximum_likelihood(residuals: &DMatrix<f64>, numeric: &[usize]) -> Option<f64> {
    if numeric.is_empty() {
        return None;
    }
    let ss: f64 = numeric.iter().map(|&r| residuals.column(r).norm_squared()).sum();
    let count = (residuals.nrows() * numeric.len()) as f64;
    Some((ss / count).max(SIGMA2_FLOOR))
}

/// Optimal-scaling update of the quantification of predictor `p`.
///
/// `residual` is `Z̃ - Φ A'` at the current `Φ`, `a_p` the row of the implied
/// coefficients `A = B V'`. The least-squares solution over the Kronecker
/// design `a_p ⊗ G_p` is projected onto the monotone cone for ordinal
/// predictors (weights `n_c ‖a_p‖²`) and normalized.
///
/// Returns `Ok(None)` when `a_p` vanishes and the update is undefined.
pub fn update_quantification(
    residual: &DMatrix<f64>,
    phi_p: &[f64],
    a_p: &[f64],
    g: &IndicatorMatrix,
    kind: VariableKind,
    name: &str,
) -> Result<Option<Quantification>> {
    let a_norm2: f64 = a_p.iter().map(|x| x * x).sum();
    if a_norm2 < 1e-24 {
        return Ok(None);
    }
    let a = DVector::from_column_slice(a_p);
    let projected = residual * &a;
    let target: Vec<f64> = projected
        .iter()
        .zip(phi_p)
        .map(|(ra, &phi)| ra + phi * a_norm2)
        .collect();
    let sums = g.category_sums(&target);
    let counts = g.counts();

    let observed: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
    let mut w = vec![0.0; counts.len()];
    for &c in &observed {
        w[c] = sums[c] / (counts[c] as f64 * a_norm2);
    }

    if kind == VariableKind::Ordinal {
        let values: Vec<f64> = observed.iter().map(|&c| w[c]).collect();
        let weights: Vec<f64> = observed.iter().map(|&c| counts[c] as f64 * a_norm2).collect();
        let fitted = monotone_regression(&values, &weights);
        for (&c, &x) in observed.iter().zip(&fitted) {
            w[c] = x;
        }
        fill_unobserved_monotone(&mut w, &counts);
    } else {
        let n: usize = counts.iter().sum();
        let mean = observed.iter().map(|&c| w[c] * counts[c] as f64).sum::<f64>() / n as f64;
        for c in 0..counts.len() {
            if counts[c] == 0 {
                w[c] = mean;
            }
        }
    }

    rescale_quantification(&w, g, kind)
        .map(Some)
        .map_err(|_| Error::DegenerateQuantification(name.to_string()))
}

/// Gives categories without observations the value of the nearest lower
/// observed category (or the first observed one), keeping `w` monotone.
pub(crate) fn fill_unobserved_monotone(w: &mut [f64], counts: &[usize]) {
    let Some(first) = counts.iter().position(|&k| k > 0) else {
        return;
    };
    let mut last = w[first];
    for c in 0..w.len() {
        if counts[c] > 0 {
            last = w[c];
        } else {
            w[c] = last;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_quantification, build_indicator};
    use crate::penalty::{majorization_diagonal, PenaltySpec};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn orthonormal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        random(rng, r, c).qr().q()
    }

    fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.kronecker(b)
    }

    #[test]
    fn unpenalized_full_rank_update_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random(&mut rng, 30, 4);
        let z = random(&mut rng, 30, 3);
        let v = DMatrix::identity(3, 3);
        let d = majorization_diagonal(&DMatrix::zeros(4, 3), &PenaltySpec::none());
        let b = update_b(&z, &phi, &v, &d, 0.25).unwrap();
        let ols = (phi.transpose() * &phi).try_inverse().unwrap() * phi.transpose() * &z;
        assert_abs_diff_eq!(b.as_slice(), ols.as_slice(), epsilon = 1e-10);
    }

    #[test]
    fn ridge_update_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = random(&mut rng, 25, 5);
        let z = random(&mut rng, 25, 2);
        let v = DMatrix::identity(2, 2);
        let lambda2 = 0.8;
        let kappa = 0.5;
        let d = majorization_diagonal(&DMatrix::zeros(5, 2), &PenaltySpec::new(0.0, lambda2, 0.0).unwrap());
        let b = update_b(&z, &phi, &v, &d, kappa).unwrap();
        let lhs = phi.transpose() * &phi + DMatrix::identity(5, 5) * (2.0 * lambda2 / kappa);
        let expected = lhs.try_inverse().unwrap() * phi.transpose() * &z;
        assert_abs_diff_eq!(b.as_slice(), expected.as_slice(), epsilon = 1e-10);
    }

    #[test]
    fn penalized_update_matches_dense_kronecker_qp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, p, r, s) = (20, 3, 2, 1);
        let phi = random(&mut rng, n, p);
        let z = random(&mut rng, n, r);
        let v = orthonormal(&mut rng, r, s);
        let b0 = random(&mut rng, p, s);
        let kappa = 0.25;
        let d = majorization_diagonal(&b0, &PenaltySpec::new(0.7, 0.1, 0.0).unwrap());
        let b = update_b(&z, &phi, &v, &d, kappa).unwrap();

        // minimize (κ/2)‖z - H b‖² + b' D b with H = V ⊗ Φ, by a dense solve
        let h = kron(&v, &phi);
        let zvec = DVector::from_column_slice(z.as_slice());
        let dmat = DMatrix::from_diagonal(&DVector::from_vec(d.entries.clone()));
        let lhs = h.transpose() * &h * kappa + dmat * 2.0;
        let rhs = h.transpose() * zvec * kappa;
        let oracle = lhs.lu().solve(&rhs).unwrap();
        assert_abs_diff_eq!(b.as_slice(), oracle.as_slice(), epsilon = 1e-10);
    }

    #[test]
    fn singular_unpenalized_system_is_reported() {
        let phi = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let z = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 1.0]);
        let v = DMatrix::identity(1, 1);
        let d = majorization_diagonal(&DMatrix::zeros(2, 1), &PenaltySpec::none());
        assert!(matches!(update_b(&z, &phi, &v, &d, 1.0), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn loadings_are_orthonormal_and_rank_one_aligned() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = random(&mut rng, 40, 5);
        let z = random(&mut rng, 40, 4);
        let b = random(&mut rng, 5, 2);
        let v = update_v(&z, &phi, &b).unwrap();
        let gram = v.transpose() * &v;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-10);

        let b1 = random(&mut rng, 5, 1);
        let v1 = update_v(&z, &phi, &b1).unwrap();
        let direction = z.transpose() * &phi * &b1;
        let unit = &direction / direction.norm();
        assert_abs_diff_eq!(v1.as_slice(), unit.as_slice(), epsilon = 1e-12);
    }

    #[test]
    fn loadings_match_brute_force_over_orthogonal_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = random(&mut rng, 15, 3);
        let z = random(&mut rng, 15, 2);
        let b = random(&mut rng, 3, 2);
        let loss = |v: &DMatrix<f64>| (&z - &phi * &b * v.transpose()).norm_squared();
        let v = update_v(&z, &phi, &b).unwrap();

        // rotations and reflections of the plane, coarse grid then refinement
        let make = |angle: f64, reflect: bool| {
            let (s, c) = angle.sin_cos();
            if reflect {
                DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
            } else {
                DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
            }
        };
        let mut best = f64::INFINITY;
        for reflect in [false, true] {
            let mut center = 0.0;
            let mut width = std::f64::consts::PI;
            for _ in 0..40 {
                let mut best_angle = center;
                let mut best_here = f64::INFINITY;
                for k in 0..=200 {
                    let angle = center - width + 2.0 * width * k as f64 / 200.0;
                    let l = loss(&make(angle, reflect));
                    if l < best_here {
                        best_here = l;
                        best_angle = angle;
                    }
                }
                center = best_angle;
                width /= 10.0;
                best = best.min(best_here);
            }
        }
        assert!((loss(&v) - best).abs() < 1e-9, "{} vs {}", loss(&v), best);
    }

    #[test]
    fn intercepts_are_column_means() {
        let z = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 5.0, 2.0, 2.0, 6.0, 2.0, 6.0, 7.0]);
        let m = update_intercepts(&z, &[ResponseKind::Numeric, ResponseKind::Binary, ResponseKind::Ordinal]);
        assert_abs_diff_eq!(m[0], 2.0);
        assert_abs_diff_eq!(m[1], 3.0);
        assert_eq!(m[2], 0.0);
    }

    #[test]
    fn sigma2_formula_and_floor() {
        let e = DMatrix::from_row_slice(3, 1, &[1.0, -1.0, 0.0]);
        assert_abs_diff_eq!(update_sigma2(&e, &[0]).unwrap(), 1.0);
        let doubled = &e * 2.0;
        assert_abs_diff_eq!(update_sigma2(&doubled, &[0]).unwrap(), 4.0);
        assert_eq!(update_sigma2(&DMatrix::zeros(3, 1), &[0]).unwrap(), SIGMA2_FLOOR);
        assert_eq!(update_sigma2(&e, &[]), None);
    }

    #[test]
    fn single_response_quantification_is_group_means() {
        let codes = [1, 1, 2, 2, 2, 3, 3, 1];
        let g = build_indicator(&codes, 3).unwrap();
        let z = [0.5, 1.5, 3.0, 2.0, 4.0, -1.0, -3.0, 1.0];
        let residual = DMatrix::from_column_slice(8, 1, &z);
        let phi_p = vec![0.0; 8];
        let q = update_quantification(&residual, &phi_p, &[1.0], &g, VariableKind::Nominal, "x")
            .unwrap()
            .unwrap();
        let means = [1.0, 3.0, -2.0];
        let expected = rescale_quantification(&means, &g, VariableKind::Nominal).unwrap();
        assert_abs_diff_eq!(q.values.as_slice(), expected.values.as_slice(), epsilon = 1e-12);
    }

    #[test]
    fn quantification_matches_kronecker_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 24;
        let codes: Vec<usize> = (0..n).map(|i| 1 + i % 3).collect();
        let g = build_indicator(&codes, 3).unwrap();
        let residual = random(&mut rng, n, 2);
        let phi_p: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a_p = [0.6, -1.3];
        let q = update_quantification(&residual, &phi_p, &a_p, &g, VariableKind::Nominal, "x")
            .unwrap()
            .unwrap();

        // dense oracle: Q = a_p ⊗ G, target = vec(residual + φ_p a_p')
        let gd = g.to_dense();
        let a = DMatrix::from_column_slice(2, 1, &a_p);
        let design = a.kronecker(&gd);
        let phi_col = DMatrix::from_column_slice(n, 1, &phi_p);
        let target = &residual + &phi_col * a.transpose();
        let tvec = DVector::from_column_slice(target.as_slice());
        let w = (design.transpose() * &design).try_inverse().unwrap() * design.transpose() * tvec;
        let expected = rescale_quantification(w.as_slice(), &g, VariableKind::Nominal).unwrap();
        assert_abs_diff_eq!(q.values.as_slice(), expected.values.as_slice(), epsilon = 1e-10);
    }

    #[test]
    fn ordinal_quantification_projection() {
        let codes = [1, 1, 2, 2, 3, 3, 4, 4];
        let g = build_indicator(&codes, 4).unwrap();
        // already monotone group means: projection is the identity
        let z = [0.0, 0.2, 1.0, 1.2, 1.9, 2.1, 4.0, 4.0];
        let residual = DMatrix::from_column_slice(8, 1, &z);
        let q = update_quantification(&residual, &[0.0; 8], &[1.0], &g, VariableKind::Ordinal, "x")
            .unwrap()
            .unwrap();
        let means = [0.1, 1.1, 2.0, 4.0];
        let expected = rescale_quantification(&means, &g, VariableKind::Ordinal).unwrap();
        assert_abs_diff_eq!(q.values.as_slice(), expected.values.as_slice(), epsilon = 1e-12);

        // a violating pair gets pooled
        let z = [0.0, 0.0, 3.0, 3.0, 1.0, 1.0, 4.0, 4.0];
        let residual = DMatrix::from_column_slice(8, 1, &z);
        let q = update_quantification(&residual, &[0.0; 8], &[1.0], &g, VariableKind::Ordinal, "x")
            .unwrap()
            .unwrap();
        assert!(q.is_monotone());
        assert_abs_diff_eq!(q.values[1], q.values[2], epsilon = 1e-12);
        let phi = apply_quantification(&g, &q.values).unwrap();
        assert!(phi.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn vanishing_coefficients_skip_the_update() {
        let g = build_indicator(&[1, 2], 2).unwrap();
        let residual = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let out = update_quantification(&residual, &[0.0, 0.0], &[0.0], &g, VariableKind::Binary, "x").unwrap();
        assert!(out.is_none());
    }

    #[test]
    fn decreasing_target_degenerates_for_ordinal() {
        let g = build_indicator(&[1, 2, 3], 3).unwrap();
        let residual = DMatrix::from_column_slice(3, 1, &[3.0, 2.0, 1.0]);
        let out = update_quantification(&residual, &[0.0; 3], &[1.0], &g, VariableKind::Ordinal, "x");
        assert!(matches!(out, Err(Error::DegenerateQuantification(_))));
    }
}
