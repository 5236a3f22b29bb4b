use std::fs;
use std::path::{Path, PathBuf};

use mixed_rrr::cli::{self, EXIT_INPUT, EXIT_OK};
use mixed_rrr::data::{NumericScaling, PredictorTransform};
use mixed_rrr::simulation::random_mixed_dataset;
use mixed_rrr::{fit, FitConfig, MixedDataset, ModelFit, PenaltySpec, Role, UnseenCategory, VariableSchema};
use nalgebra::DMatrix;

mod worked {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/worked_prediction.rs"));
}

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("mixed-rrr").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_data(dir: &Path, data: &MixedDataset) -> (PathBuf, PathBuf) {
    let (d, sc) = (dir.join("data.csv"), dir.join("schema.csv"));
    data.write_csv(&d).unwrap();
    data.schema().write_csv(&sc).unwrap();
    (d, sc)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fit_writes_every_artifact_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_data(dir.path(), &random_mixed_dataset(60, 4, 3, 1).unwrap());
    let out = dir.path().join("fit");
    let code = run(&["fit", "--data", s(&data), "--schema", s(&schema), "--rank", "2", "--lambda3", "0.5", "--seed", "4", "--out", s(&out)]);
    assert_eq!(code, EXIT_OK);
    for f in ["model.json", "B.csv", "V.csv", "m.csv", "thresholds.csv", "implied_coefficients.csv", "quantifications.csv", "trace.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["arguments"]["fit"]["rank"], 2);

    let b = fs::read_to_string(out.join("B.csv")).unwrap();
    assert_eq!(b.lines().next().unwrap(), "predictor,dim1,dim2");
    assert_eq!(b.lines().count(), 5);
    // three ordinal thresholds for the four-level response
    assert_eq!(fs::read_to_string(out.join("thresholds.csv")).unwrap().lines().count(), 4);
}

#[test]
fn unknown_category_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_data(dir.path(), &random_mixed_dataset(40, 4, 3, 2).unwrap());
    let text = fs::read_to_string(&data).unwrap();
    // x2 is binary with labels no|yes
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[1].split(',').map(String::from).collect();
    cells[1] = "maybe".into();
    lines[1] = cells.join(",");
    fs::write(&data, lines.join("\n") + "\n").unwrap();

    let out = dir.path().join("fit");
    let code = run(&["fit", "--data", s(&data), "--schema", s(&schema), "--rank", "1", "--out", s(&out)]);
    assert_eq!(code, EXIT_INPUT);
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["error"], "UnknownCategory");
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn conflicting_penalties_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_data(dir.path(), &random_mixed_dataset(40, 4, 3, 2).unwrap());
    let out = dir.path().join("fit");
    let code = run(&["fit", "--data", s(&data), "--schema", s(&schema), "--rank", "1", "--lambda1", "1", "--lambda3", "1", "--out", s(&out)]);
    assert_eq!(code, EXIT_INPUT);
    assert_eq!(read_json(&out.join("error.json"))["error"], "InvalidPenaltyCombination");
}

#[test]
fn saved_model_predicts_like_the_fitted_one() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = random_mixed_dataset(80, 5, 3, 3).unwrap();
    let (data, schema) = write_data(dir.path(), &dataset);
    let out = dir.path().join("fit");
    assert_eq!(run(&["fit", "--data", s(&data), "--schema", s(&schema), "--rank", "2", "--lambda2", "0.5", "--out", s(&out)]), EXIT_OK);

    // the CSV round trip of the data is exact, so an in-memory fit must agree
    let reread = MixedDataset::from_csv_path(&data, &mixed_rrr::Schema::from_csv_path(&schema).unwrap()).unwrap();
    let in_memory = fit(&reread, &FitConfig::new(2, PenaltySpec::new(0.0, 0.5, 0.0).unwrap())).unwrap();
    let loaded = ModelFit::load(out.join("model.json")).unwrap();
    let a = in_memory.canonical(&reread, UnseenCategory::Reject).unwrap();
    let b = loaded.canonical(&reread, UnseenCategory::Reject).unwrap();
    assert!((a - b).amax() < 1e-12);

    let pred = dir.path().join("pred");
    assert_eq!(run(&["predict", "--model", s(&out.join("model.json")), "--data", s(&data), "--out", s(&pred)]), EXIT_OK);
    let rows = fs::read_to_string(pred.join("predictions.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 80 * 3);
    assert!(pred.join("heldout_loss.json").is_file());
}

#[test]
fn empty_input_gives_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = random_mixed_dataset(50, 3, 3, 4).unwrap();
    let (data, schema) = write_data(dir.path(), &dataset);
    let out = dir.path().join("fit");
    assert_eq!(run(&["fit", "--data", s(&data), "--schema", s(&schema), "--rank", "1", "--out", s(&out)]), EXIT_OK);

    let header = fs::read_to_string(&data).unwrap().lines().next().unwrap().to_string();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, header + "\n").unwrap();
    let pred = dir.path().join("pred");
    assert_eq!(run(&["predict", "--model", s(&out.join("model.json")), "--data", s(&empty), "--out", s(&pred)]), EXIT_OK);
    let rows = fs::read_to_string(pred.join("predictions.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1);
}

#[test]
fn zero_scores_predict_the_intercept() {
    let dir = tempfile::tempdir().unwrap();
    let model = ModelFit::from_parameters(
        vec![VariableSchema::numeric("x", Role::Predictor)],
        vec![VariableSchema::numeric("y", Role::Response)],
        vec![PredictorTransform::Standardized(NumericScaling { mean: 1.0, sd: 2.0 })],
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 1.0),
        vec![2.5],
        Some(1.0),
        vec![None],
    )
    .unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let data = dir.path().join("new.csv");
    fs::write(&data, "x\n-3\n0\n17.5\n").unwrap();
    let pred = dir.path().join("pred");
    assert_eq!(run(&["predict", "--model", s(&path), "--data", s(&data), "--out", s(&pred)]), EXIT_OK);
    let mut reader = csv::Reader::from_path(pred.join("predictions.csv")).unwrap();
    let values: Vec<f64> = reader.records().map(|r| r.unwrap()[3].parse().unwrap()).collect();
    assert_eq!(values, vec![2.5, 2.5, 2.5]);
}

#[test]
fn worked_example_through_predict() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    worked::worked_example_model().unwrap().save(&path).unwrap();
    let data = dir.path().join("row.csv");
    let header: Vec<&str> = worked::ACTIVE_PREDICTORS.iter().map(|(n, _, _)| *n).collect();
    let row: Vec<String> = worked::ACTIVE_PREDICTORS.iter().map(|(_, x, _)| x.to_string()).collect();
    fs::write(&data, format!("{}\n{}\n", header.join(","), row.join(","))).unwrap();
    let pred = dir.path().join("pred");
    assert_eq!(run(&["predict", "--model", s(&path), "--data", s(&data), "--out", s(&pred)]), EXIT_OK);

    let mut reader = csv::Reader::from_path(pred.join("predictions.csv")).unwrap();
    let record = reader.records().next().unwrap().unwrap();
    let theta: f64 = record[2].parse().unwrap();
    // exact sum of the seven printed products
    let expected = 0.80 * 0.09 + 5.03 * -0.27 + 0.32 * 0.04 + -1.81 * 0.00 + 0.13 * 0.05 + 0.15 * -0.01 + -0.22 * 0.05;
    assert!((theta - expected).abs() < 1e-12);
    assert_eq!(&record[3], "5");
    assert_eq!(&record[4], "Fairly Satisfied");
    let probs: Vec<f64> = record[5].split('|').map(|p| p.parse().unwrap()).collect();
    assert_eq!(probs.len(), 7);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn single_cell_grid_gives_one_row_per_fold() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_data(dir.path(), &random_mixed_dataset(40, 3, 3, 5).unwrap());
    let out = dir.path().join("cv");
    let code = run(&["cv", "--data", s(&data), "--schema", s(&schema), "--rank", "1", "--grid", "3", "--folds", "2", "--out", s(&out)]);
    assert_eq!(code, EXIT_OK);
    let folds = fs::read_to_string(out.join("cv_folds.csv")).unwrap();
    assert_eq!(folds.lines().count(), 3);
    assert!(out.join("cv_curve_S1.csv").is_file());
}

#[test]
fn cv_summary_is_reproducible_across_runs_and_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_data(dir.path(), &random_mixed_dataset(60, 4, 3, 6).unwrap());
    let mut summaries = Vec::new();
    for (i, workers) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("cv{i}"));
        let code = run(&[
            "--workers", workers, "cv", "--data", s(&data), "--schema", s(&schema), "--rank", "1,2",
            "--grid", "4:2", "--folds", "3", "--seed", "8", "--refit", "--out", s(&out),
        ]);
        assert_eq!(code, EXIT_OK);
        summaries.push((
            fs::read(out.join("cv_summary.json")).unwrap(),
            fs::read(out.join("cv_folds.csv")).unwrap(),
            fs::read(out.join("model_min/model.json")).unwrap(),
        ));
    }
    assert!(summaries.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn lasso_zeroes_single_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_data(dir.path(), &random_mixed_dataset(300, 12, 6, 7).unwrap());
    let out = dir.path().join("fit");
    let code = run(&["fit", "--data", s(&data), "--schema", s(&schema), "--rank", "2", "--lambda1", "15", "--lambda2", "0.01", "--out", s(&out)]);
    assert_eq!(code, EXIT_OK);
    let mut reader = csv::Reader::from_path(out.join("B.csv")).unwrap();
    let rows: Vec<[f64; 2]> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            [r[1].parse().unwrap(), r[2].parse().unwrap()]
        })
        .collect();
    let zeros_per_row: Vec<usize> = rows.iter().map(|r| r.iter().filter(|&&x| x == 0.0).count()).collect();
    assert!(zeros_per_row.contains(&1), "no predictor is active in exactly one dimension: {rows:?}");
    assert!(zeros_per_row.contains(&0), "every predictor was shrunk: {rows:?}");
}

#[test]
fn report_summarizes_a_saved_model() {
    let dir = tempfile::tempdir().unwrap();
    let (data, schema) = write_data(dir.path(), &random_mixed_dataset(60, 4, 3, 9).unwrap());
    let out = dir.path().join("fit");
    assert_eq!(run(&["fit", "--data", s(&data), "--schema", s(&schema), "--rank", "1", "--lambda3", "50", "--out", s(&out)]), EXIT_OK);
    let report_dir = dir.path().join("report");
    assert_eq!(run(&["report", "--model", s(&out.join("model.json")), "--out", s(&report_dir)]), EXIT_OK);
    let report = read_json(&report_dir.join("report.json"));
    assert_eq!(report["rank"], 1);
    // (4 + 3 - 1)·1 + one free quantification for the 3-level nominal and
    // two for the 4-level ordinal predictor + 2 intercepts + 3 thresholds
    assert_eq!(report["n_parameters"], 6 + 1 + 2 + 2 + 3);
    assert_eq!(fs::read(report_dir.join("B.csv")).unwrap(), fs::read(out.join("B.csv")).unwrap());
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("study.toml");
    fs::write(
        &config,
        "grid_max = 10.0\ngrid_step = 5.0\nranks = [1]\nfolds = 3\nk_levels = [1.0]\n\n[[scenarios]]\nn = 60\nnoise = 2\nresponses = 3\nreplications = 2\nseed = 1\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("sim{i}"));
        assert_eq!(run(&["--workers", workers, "simulate", "--config", s(&config), "--out", s(&out)]), EXIT_OK);
        outputs.push((fs::read(out.join("study_summary.json")).unwrap(), fs::read(out.join("replicates.csv")).unwrap()));
        let table = fs::read_to_string(out.join("study_table.csv")).unwrap();
        assert_eq!(table.lines().count(), 1 + 2);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn missing_files_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let code = run(&["predict", "--model", "/nonexistent/model.json", "--data", "x.csv", "--out", s(&out)]);
    assert_eq!(code, EXIT_INPUT);
    assert_eq!(read_json(&out.join("error.json"))["error"], "IoError");
}
