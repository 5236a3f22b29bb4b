// A small selection study: informative and noise predictors, group-lasso
// fits at the CV minimum and at the 1SE and 2SE rules, summarized as true
// and false discovery rates.
//
// The full-size design (n = 500, 10 noise predictors, 6 responses, 20
// replicates) is available through `mixed-rrr simulate`.

use mixed_rrr::simulation::format_table;
use mixed_rrr::{run_study, Scenario, StudyConfig};

pub fn run_example() -> mixed_rrr::Result<()> {
    let mut scenario = Scenario::new(200, 6, 3);
    scenario.replications = 3;
    scenario.seed = 2024;
    let mut config = StudyConfig::new(vec![scenario]);
    config.grid_max = 30.0;
    config.grid_step = 5.0;
    config.ranks = vec![1, 2];
    config.folds = 5;
    config.k_levels = vec![1.0, 2.0];

    let (summary, replicates) = run_study(&config)?;
    for r in &replicates {
        let chosen: Vec<String> = r.levels.iter().map(|l| format!("{}: S={} λ={}", l.level, l.rank, l.lambda)).collect();
        println!("replicate {}: {}", r.replicate, chosen.join(", "));
    }
    print!("{}", format_table(&summary));
    Ok(())
}

#[allow(dead_code)]
fn main() -> mixed_rrr::Result<()> {
    run_example()
}
