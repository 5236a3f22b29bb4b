// Fit a rank-2 group-lasso model to a small mixed data set and inspect the
// estimated scores, loadings and ordinal thresholds.
//
// ```bash
// cargo run --example quickstart
// ```

use mixed_rrr::simulation::random_mixed_dataset;
use mixed_rrr::{fit, FitConfig, PenaltySpec};

pub fn run_example() -> mixed_rrr::Result<()> {
    // 200 rows, 6 predictors of every measurement level, 3 responses
    // (numeric, binary, ordinal)
    let data = random_mixed_dataset(200, 6, 3, 42)?;
    let config = FitConfig::new(2, PenaltySpec::new(0.0, 0.01, 2.0)?);
    let model = fit(&data, &config)?;

    println!(
        "converged={} after {} iterations, penalized loss {:.4}",
        model.converged, model.iterations, model.loss.total
    );
    println!("predictor scores B:");
    for (p, v) in model.predictor_schema.iter().enumerate() {
        println!("  {:>4} {:>8.4} {:>8.4}", v.name, model.b[(p, 0)], model.b[(p, 1)]);
    }
    println!("response loadings V:");
    for (r, v) in model.response_schema.iter().enumerate() {
        println!("  {:>4} {:>8.4} {:>8.4}  ({:?})", v.name, model.v[(r, 0)], model.v[(r, 1)], v.kind);
    }
    for (v, t) in model.response_schema.iter().zip(&model.thresholds) {
        if let Some(t) = t {
            println!("thresholds of {}: {:?}", v.name, t);
        }
    }
    if let Some(s2) = model.sigma2 {
        println!("residual variance of numeric responses: {s2:.4}");
    }

    let predictions = model.predict(&data, mixed_rrr::UnseenCategory::Reject)?;
    println!("first row predictions:");
    for (name, p) in predictions.response_names.iter().zip(&predictions.rows[0]) {
        println!("  {name}: theta={:.3} value={:.3}", p.theta, p.value);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> mixed_rrr::Result<()> {
    run_example()
}
