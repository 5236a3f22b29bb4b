// Score one respondent with published estimates.
//
// The seven active predictors enter with their already-quantified values
// (identity transforms), the implied coefficients for a 7-category
// satisfaction item form a rank-1 score vector, and the cumulative-logit
// thresholds classify the resulting canonical parameter.

use mixed_rrr::data::{NumericScaling, PredictorTransform};
use mixed_rrr::{
    Column, ColumnValues, MixedDataset, ModelFit, Role, UnseenCategory, VariableKind, VariableSchema,
};
use nalgebra::DMatrix;

/// Predictor, its quantified value for the respondent, and its implied
/// coefficient for the satisfaction item.
pub const ACTIVE_PREDICTORS: [(&str, f64, f64); 7] = [
    ("DL", 0.80, 0.09),
    ("FO", 5.03, -0.27),
    ("NV", 0.32, 0.04),
    ("PA", -1.81, 0.00),
    ("AG", 0.13, 0.05),
    ("RG", 0.15, -0.01),
    ("IN", -0.22, 0.05),
];

pub const SATISFACTION_THRESHOLDS: [f64; 6] = [-5.10, -4.63, -3.39, -2.40, 0.09, 3.05];

pub const SATISFACTION_LEVELS: [&str; 7] = [
    "Completely Dissatisfied",
    "Very Dissatisfied",
    "Fairly Dissatisfied",
    "Neutral",
    "Fairly Satisfied",
    "Very Satisfied",
    "Completely Satisfied",
];

pub fn worked_example_model() -> mixed_rrr::Result<ModelFit> {
    let predictors: Vec<VariableSchema> = ACTIVE_PREDICTORS
        .iter()
        .map(|(name, _, _)| VariableSchema::numeric(*name, Role::Predictor))
        .collect();
    let response = VariableSchema::categorical("SH", VariableKind::Ordinal, SATISFACTION_LEVELS, Role::Response);
    let identity = PredictorTransform::Standardized(NumericScaling { mean: 0.0, sd: 1.0 });
    let coefficients: Vec<f64> = ACTIVE_PREDICTORS.iter().map(|(_, _, a)| *a).collect();
    ModelFit::from_parameters(
        predictors,
        vec![response],
        vec![identity; ACTIVE_PREDICTORS.len()],
        DMatrix::from_column_slice(coefficients.len(), 1, &coefficients),
        DMatrix::from_element(1, 1, 1.0),
        vec![0.0],
        None,
        vec![Some(SATISFACTION_THRESHOLDS.to_vec())],
    )
}

pub fn worked_example_row() -> mixed_rrr::Result<MixedDataset> {
    let predictors = ACTIVE_PREDICTORS
        .iter()
        .map(|(name, x, _)| Column::new(VariableSchema::numeric(*name, Role::Predictor), ColumnValues::Real(vec![*x])))
        .collect::<mixed_rrr::Result<Vec<_>>>()?;
    MixedDataset::new(predictors, Vec::new())
}

pub fn run_example() -> mixed_rrr::Result<()> {
    let model = worked_example_model()?;
    // score through a saved and reloaded model file
    let path = std::env::temp_dir().join("mixed_rrr_worked_example.json");
    model.save(&path)?;
    let model = ModelFit::load(&path)?;

    let prediction = &model.predict(&worked_example_row()?, UnseenCategory::Reject)?.rows[0][0];
    let category = prediction.value as usize;
    println!("canonical parameter: {:.4}", prediction.theta);
    println!("predicted category: {} ({})", category, SATISFACTION_LEVELS[category - 1]);
    for (label, p) in SATISFACTION_LEVELS.iter().zip(prediction.probabilities.as_deref().unwrap_or(&[])) {
        println!("  P({label}) = {p:.4}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> mixed_rrr::Result<()> {
    run_example()
}
