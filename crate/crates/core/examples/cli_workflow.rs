// End-to-end file workflow through the command-line front end: write a data
// CSV and its schema sidecar, then `fit`, `predict`, `report` and `cv`.
//
// The same commands are available from the shell, e.g.
//
// ```bash
// mixed-rrr fit --data data.csv --schema schema.csv --rank 2 --lambda3 1 --out fit/
// mixed-rrr predict --model fit/model.json --data new.csv --out pred/
// ```

use std::path::Path;

use mixed_rrr::cli;
use mixed_rrr::simulation::random_mixed_dataset;

fn run_cli(args: &[&str]) -> mixed_rrr::Result<()> {
    let code = cli::run(std::iter::once("mixed-rrr").chain(args.iter().copied()));
    if code != cli::EXIT_OK {
        return Err(mixed_rrr::Error::InvalidConfig(format!("`{}` exited with {code}", args.join(" "))));
    }
    Ok(())
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn run_example_in(dir: &Path) -> mixed_rrr::Result<()> {
    let data = random_mixed_dataset(120, 5, 3, 9)?;
    let (data_csv, schema_csv) = (dir.join("data.csv"), dir.join("schema.csv"));
    data.write_csv(&data_csv)?;
    data.schema().write_csv(&schema_csv)?;
    println!("schema sidecar:\n{}", std::fs::read_to_string(&schema_csv)?);

    let fit_dir = dir.join("fit");
    run_cli(&[
        "fit", "--data", path(&data_csv), "--schema", path(&schema_csv),
        "--rank", "2", "--lambda2", "0.01", "--lambda3", "1", "--out", path(&fit_dir),
    ])?;
    println!("B.csv:\n{}", std::fs::read_to_string(fit_dir.join("B.csv"))?);

    let pred_dir = dir.join("predict");
    run_cli(&["predict", "--model", path(&fit_dir.join("model.json")), "--data", path(&data_csv), "--out", path(&pred_dir)])?;
    let predictions = std::fs::read_to_string(pred_dir.join("predictions.csv"))?;
    println!("first predictions:\n{}", predictions.lines().take(4).collect::<Vec<_>>().join("\n"));

    run_cli(&["report", "--model", path(&fit_dir.join("model.json")), "--out", path(&dir.join("report"))])?;

    let cv_dir = dir.join("cv");
    run_cli(&[
        "cv", "--data", path(&data_csv), "--schema", path(&schema_csv), "--rank", "1,2",
        "--penalty", "group-lasso", "--grid", "6:2", "--folds", "4", "--k-levels", "1",
        "--tol", "1e-6", "--seed", "3", "--out", path(&cv_dir),
    ])?;
    println!("cv summary:\n{}", std::fs::read_to_string(cv_dir.join("cv_summary.json"))?);
    Ok(())
}

pub fn run_example() -> mixed_rrr::Result<()> {
    let dir = std::env::temp_dir().join(format!("mixed_rrr_cli_workflow_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let result = run_example_in(&dir);
    std::fs::remove_dir_all(&dir)?;
    result
}

#[allow(dead_code)]
fn main() -> mixed_rrr::Result<()> {
    run_example()
}
