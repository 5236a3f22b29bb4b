//! Penalized reduced-rank regression for mixed numeric, binary and ordinal
//! responses, with optimal scaling of categorical predictors.
//!
//! The model links every response to a canonical parameter
//! `θ_ir = m_r + φ_i' B v_r`, where `Φ` holds standardized numeric
//! predictors and quantified categorical ones, `B` (`P × S`) carries the
//! predictor scores and `V` (`R × S`, orthonormal) the response loadings.
//! Estimation minimizes the negative log-likelihood plus a lasso, ridge or
//! group-lasso penalty on `B` by majorization-minimization.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod isotonic;
pub mod likelihood;
pub mod model;
pub mod penalty;
pub mod selection;
pub mod simulation;
pub mod solver;

pub use data::{
    Column, ColumnValues, MixedDataset, Quantification, Role, Schema, UnseenCategory, VariableKind,
    VariableSchema,
};
pub use error::{Error, Result};
pub use isotonic::monotone_regression;
pub use likelihood::{Family, LossBreakdown, ResponseKind};
pub use model::{ModelFit, Predictions};
pub use penalty::{PenaltyKind, PenaltySpec};
pub use solver::{fit, fit_from, FitConfig};
pub use selection::{count_parameters, cross_validate, select_models, CVGrid, CvConfig, SelectionResult};
pub use simulation::{generate_dataset, run_study, Scenario, StudyConfig, StudySummary};
