//! Every example must run to completion.

macro_rules! example {
    ($module:ident, $file:literal) => {
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(quickstart, "quickstart.rs");
example!(optimal_scaling, "optimal_scaling.rs");
example!(penalty_paths, "penalty_paths.rs");
example!(cross_validation, "cross_validation.rs");
example!(simulation_study, "simulation_study.rs");
example!(worked_prediction, "worked_prediction.rs");
example!(cli_workflow, "cli_workflow.rs");

#[test]
fn quickstart_runs() {
    quickstart::run_example().unwrap();
}

#[test]
fn optimal_scaling_runs() {
    optimal_scaling::run_example().unwrap();
}

#[test]
fn penalty_paths_run() {
    penalty_paths::run_example().unwrap();
}

#[test]
fn cross_validation_runs() {
    cross_validation::run_example().unwrap();
}

#[test]
fn simulation_study_runs() {
    simulation_study::run_example().unwrap();
}

#[test]
fn worked_prediction_runs() {
    worked_prediction::run_example().unwrap();
}

#[test]
fn cli_workflow_runs() {
    let dir = tempfile::tempdir().unwrap();
    cli_workflow::run_example_in(dir.path()).unwrap();
}
