// How the three penalties shrink the predictor scores.
//
// Lasso zeroes individual entries of `B`, group lasso zeroes whole rows and
// ridge shrinks without producing exact zeros. Each path is warm-started
// from the previous solution.

use mixed_rrr::simulation::random_mixed_dataset;
use mixed_rrr::{fit_from, FitConfig, ModelFit, PenaltyKind, PenaltySpec};

pub fn run_example() -> mixed_rrr::Result<()> {
    let data = random_mixed_dataset(150, 10, 4, 7)?;
    let lambdas = [0.0, 2.0, 5.0, 10.0, 20.0, 40.0];

    for kind in [PenaltyKind::Lasso, PenaltyKind::GroupLasso, PenaltyKind::Ridge] {
        println!("{kind:?}");
        println!("  lambda  zero entries  zero rows  |B|_F");
        let mut previous: Option<ModelFit> = None;
        for &lambda in &lambdas {
            let config = FitConfig::new(2, PenaltySpec::from_kind(kind, lambda, 0.01)?);
            let model = fit_from(&data, &config, previous.as_ref())?;
            let zero_entries = model.b.iter().filter(|&&x| x == 0.0).count();
            let zero_rows = (0..model.b.nrows())
                .filter(|&p| model.b.row(p).iter().all(|&x| x == 0.0))
                .count();
            println!("  {lambda:>6}  {zero_entries:>12}  {zero_rows:>9}  {:.4}", model.b.norm());
            previous = Some(model);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> mixed_rrr::Result<()> {
    run_example()
}
