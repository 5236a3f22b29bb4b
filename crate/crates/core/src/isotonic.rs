//! Weighted monotone (isotonic) regression by pool-adjacent-violators.

/// Weighted least-squares projection of `values` onto the cone of
/// non-decreasing vectors: minimizes `Σ w_i (x_i - values_i)²` subject to
/// `x_1 <= x_2 <= …`. Weights must be positive.
pub fn monotone_regression(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len(), "values and weights differ in length");
    debug_assert!(weights.iter().all(|&w| w > 0.0), "weights must be positive");

    // blocks of pooled (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&y, &w) in values.iter().zip(weights) {
        let mut current = (y, w, 1usize);
        while let Some(&(mean, weight, len)) = blocks.last() {
            if mean <= current.0 {
                break;
            }
            blocks.pop();
            let total = weight + current.1;
            current = (
                (mean * weight + current.0 * current.1) / total,
                total,
                len + current.2,
            );
        }
        blocks.push(current);
    }

    let mut out = Vec::with_capacity(values.len());
    for (mean, _, len) in blocks {
        out.extend(std::iter::repeat_n(mean, len));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sorted_input_is_unchanged() {
        let x = [-1.0, 0.0, 0.0, 2.5];
        assert_eq!(monotone_regression(&x, &[1.0; 4]), x.to_vec());
    }

    #[test]
    fn pools_violators() {
        let fit = monotone_regression(&[3.0, 1.0, 2.0], &[1.0; 3]);
        for v in fit {
            assert!((v - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_pull_the_pooled_mean() {
        let fit = monotone_regression(&[2.0, 0.0], &[3.0, 1.0]);
        assert!((fit[0] - 1.5).abs() < 1e-15);
        assert_eq!(fit[0], fit[1]);
    }

    proptest! {
        #[test]
        fn output_is_monotone_and_preserves_weighted_mean(
            pairs in prop::collection::vec((-10.0f64..10.0, 0.1f64..5.0), 1..30)
        ) {
            let (values, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let fit = monotone_regression(&values, &weights);
            prop_assert!(fit.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            let wsum: f64 = weights.iter().sum();
            let before: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
            let after: f64 = fit.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / wsum;
            prop_assert!((before - after).abs() < 1e-9);
        }
    }
}
