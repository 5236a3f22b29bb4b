// Choose the rank and the group-lasso strength by 10-fold cross-validation,
// then apply the k-standard-error rule for sparser alternatives.

use mixed_rrr::selection::{lambda_grid, write_curve_csv};
use mixed_rrr::simulation::random_mixed_dataset;
use mixed_rrr::{cross_validate, fit, select_models, CvConfig, PenaltyKind};

pub fn run_example() -> mixed_rrr::Result<()> {
    let data = random_mixed_dataset(150, 8, 3, 11)?;
    let mut config = CvConfig::new(vec![1, 2], lambda_grid(20.0, 4.0)?, PenaltyKind::GroupLasso);
    config.seed = 5;
    config.rel_tolerance = 1e-6;

    let grid = cross_validate(&data, &config)?;
    println!("mean held-out loss per row (rank x lambda):");
    for (ri, rank) in grid.ranks.iter().enumerate() {
        let cells: Vec<String> = grid.cv_mean[ri]
            .iter()
            .zip(&grid.cv_se[ri])
            .map(|(m, se)| format!("{m:.3}±{se:.3}"))
            .collect();
        println!("  S={rank}: {}", cells.join("  "));
    }

    let selection = select_models(&grid, &[1.0, 2.0])?;
    println!("minimum: S={} lambda={}", selection.s_star, selection.lambda_min);
    for choice in &selection.lambda_kse {
        let model = fit(&data, &config.fit_config(choice.rank, choice.lambda)?)?;
        let active = (0..model.b.nrows())
            .filter(|&p| model.b.row(p).iter().any(|&x| x != 0.0))
            .count();
        println!(
            "{}SE rule: S={} lambda={} ({} of {} predictors active)",
            choice.k,
            choice.rank,
            choice.lambda,
            active,
            model.b.nrows()
        );
    }

    let path = std::env::temp_dir().join("mixed_rrr_cv_curve.csv");
    write_curve_csv(&grid, &path)?;
    println!("curve written to {}", path.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> mixed_rrr::Result<()> {
    run_example()
}
