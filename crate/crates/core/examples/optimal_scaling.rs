// Optimal scaling recovers category spacings from the data.
//
// An ordinal predictor with unevenly spaced effects and a nominal predictor
// with an arbitrary category order drive two numeric responses and one
// binary response. The learned quantifications follow the true effects, and
// the ordinal one stays monotone.

use mixed_rrr::data::write_phi_csv;
use mixed_rrr::{
    fit, Column, ColumnValues, FitConfig, MixedDataset, PenaltySpec, Role, VariableKind, VariableSchema,
};
use mixed_rrr::data::PredictorTransform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const ORDINAL_EFFECT: [f64; 5] = [-1.0, -0.9, -0.8, 0.4, 2.0];
const NOMINAL_EFFECT: [f64; 4] = [0.5, -1.5, 1.0, 0.0];

pub fn build_data(n: usize, seed: u64) -> mixed_rrr::Result<MixedDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let severity: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=5)).collect();
    let region: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=4)).collect();
    let income: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let signal: Vec<f64> = (0..n)
        .map(|i| ORDINAL_EFFECT[severity[i] - 1] + NOMINAL_EFFECT[region[i] - 1] + 0.5 * income[i])
        .collect();

    let noise = |rng: &mut ChaCha8Rng| -> f64 { 0.5 * rng.sample::<f64, _>(StandardNormal) };
    let y1: Vec<f64> = signal.iter().map(|s| s + noise(&mut rng)).collect();
    let y2: Vec<f64> = signal.iter().map(|s| -0.5 * s + noise(&mut rng)).collect();
    let y3: Vec<usize> = signal
        .iter()
        .map(|s| if rng.gen::<f64>() < 1.0 / (1.0 + (-2.0 * s).exp()) { 2 } else { 1 })
        .collect();

    let predictors = vec![
        Column::new(
            VariableSchema::categorical("severity", VariableKind::Ordinal, ["none", "mild", "moderate", "high", "severe"], Role::Predictor),
            ColumnValues::Category(severity),
        )?,
        Column::new(
            VariableSchema::categorical("region", VariableKind::Nominal, ["north", "east", "south", "west"], Role::Predictor),
            ColumnValues::Category(region),
        )?,
        Column::new(VariableSchema::numeric("income", Role::Predictor), ColumnValues::Real(income))?,
    ];
    let responses = vec![
        Column::new(VariableSchema::numeric("score_a", Role::Response), ColumnValues::Real(y1))?,
        Column::new(VariableSchema::numeric("score_b", Role::Response), ColumnValues::Real(y2))?,
        Column::new(
            VariableSchema::categorical("flag", VariableKind::Binary, ["no", "yes"], Role::Response),
            ColumnValues::Category(y3),
        )?,
    ];
    MixedDataset::new(predictors, responses)
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn run_example() -> mixed_rrr::Result<()> {
    let data = build_data(600, 3)?;
    let model = fit(&data, &FitConfig::new(1, PenaltySpec::none()))?;

    for (v, t) in model.predictor_schema.iter().zip(&model.transforms) {
        let PredictorTransform::Quantified(q) = t else { continue };
        let truth: &[f64] = if v.name == "severity" { &ORDINAL_EFFECT } else { &NOMINAL_EFFECT };
        // orient by the sign of the implied effect on the first response
        let p = model.predictor_schema.iter().position(|x| x.name == v.name).unwrap();
        let sign = model.implied_coefficients()[(p, 0)].signum();
        let oriented: Vec<f64> = q.values.iter().map(|w| sign * w).collect();
        println!("{} ({:?})", v.name, v.kind);
        for (label, w) in v.categories.iter().zip(&q.values) {
            println!("  {label:>9} {w:>8.3}");
        }
        println!("  correlation with the true effects: {:.3}", correlation(&oriented, truth));
        if v.kind == VariableKind::Ordinal {
            assert!(q.is_monotone(), "ordinal quantification must be non-decreasing");
        }
    }

    let dir = std::env::temp_dir().join("mixed_rrr_optimal_scaling");
    std::fs::create_dir_all(&dir)?;
    let phi = model.transform(&data, mixed_rrr::UnseenCategory::Reject)?.phi;
    let names: Vec<String> = model.predictor_schema.iter().map(|v| v.name.clone()).collect();
    write_phi_csv(dir.join("phi.csv"), &names, &phi)?;
    println!("transformed predictors written to {}", dir.join("phi.csv").display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> mixed_rrr::Result<()> {
    run_example()
}
