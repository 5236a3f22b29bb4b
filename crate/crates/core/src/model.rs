//! Fitted models: prediction, held-out evaluation and the JSON document.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{
    transform_predictors, VariableKind, MixedDataset, PredictorTransform, Provenance, TransformedPredictors,
    UnseenCategory, VariableSchema,
};
use crate::error::{Error, Result};
use crate::likelihood::{
    canonical_params, logistic, Family, ordinal_category_probs, predict_ordinal_category, LossBreakdown,
    ResponseKind,
};
use crate::penalty::PenaltySpec;
use crate::solver::{response_losses, FitConfig, ResponseMatrix};

/// Version tag of the serialized model document.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Estimated parameters of one fit together with the learned predictor
/// transforms and the convergence history.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub predictor_schema: Vec<VariableSchema>,
    pub response_schema: Vec<VariableSchema>,
    pub transforms: Vec<PredictorTransform>,
    /// `P × S` predictor scores.
    pub b: DMatrix<f64>,
    /// `R × S` orthonormal loadings.
    pub v: DMatrix<f64>,
    /// Intercepts, zero for ordinal responses.
    pub m: Vec<f64>,
    /// Shared residual variance of numeric responses.
    pub sigma2: Option<f64>,
    /// Thresholds of each ordinal response.
    pub thresholds: Vec<Option<Vec<f64>>>,
    /// Empty ordinal categories (1-based) merged during estimation.
    pub empty_categories: Vec<Vec<usize>>,
    pub config: FitConfig,
    /// Penalized loss at the start and after every outer iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loss: LossBreakdown,
    pub skipped_quantification_updates: usize,
}

/// Prediction for one row and response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub theta: f64,
    /// Expected value (numeric), probability of the second category
    /// (binary) or predicted category (ordinal).
    pub value: f64,
    /// Category probabilities for ordinal responses.
    pub probabilities: Option<Vec<f64>>,
}

/// Predictions for a data set, indexed `[row][response]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub response_names: Vec<String>,
    pub rows: Vec<Vec<Prediction>>,
    pub unseen_rows: usize,
}

impl ModelFit {
    pub fn rank(&self) -> usize {
        self.b.ncols()
    }

    pub fn response_kinds(&self) -> Vec<ResponseKind> {
        self.response_schema
            .iter()
            .map(|s| match s.kind {
                VariableKind::Numeric => ResponseKind::Numeric,
                VariableKind::Binary => ResponseKind::Binary,
                _ => ResponseKind::Ordinal,
            })
            .collect()
    }

    /// Implied `P × R` coefficient matrix `A = B V'`.
    pub fn implied_coefficients(&self) -> DMatrix<f64> {
        &self.b * self.v.transpose()
    }

    /// Applies the learned transforms to new rows.
    pub fn transform(&self, data: &MixedDataset, policy: UnseenCategory) -> Result<TransformedPredictors> {
        self.check_schema(data)?;
        transform_predictors(data, &self.transforms, policy)
    }

    /// Canonical parameters `1m' + Φ B V'` of new rows.
    pub fn canonical(&self, data: &MixedDataset, policy: UnseenCategory) -> Result<DMatrix<f64>> {
        let t = self.transform(data, policy)?;
        canonical_params(&t.phi, &self.b, &self.v, &self.m)
    }

    pub fn predict(&self, data: &MixedDataset, policy: UnseenCategory) -> Result<Predictions> {
        let t = self.transform(data, policy)?;
        let theta = canonical_params(&t.phi, &self.b, &self.v, &self.m)?;
        Ok(self.predict_from_theta(&theta, t.unseen_rows))
    }

    pub fn predict_from_theta(&self, theta: &DMatrix<f64>, unseen_rows: usize) -> Predictions {
        let kinds = self.response_kinds();
        let rows = (0..theta.nrows())
            .map(|i| {
                kinds
                    .iter()
                    .enumerate()
                    .map(|(r, kind)| {
                        let th = theta[(i, r)];
                        match kind {
                            ResponseKind::Numeric => Prediction {
                                theta: th,
                                value: th,
                                probabilities: None,
                            },
                            ResponseKind::Binary => Prediction {
                                theta: th,
                                value: logistic(th),
                                probabilities: None,
                            },
                            ResponseKind::Ordinal => {
                                let t = self.thresholds[r].as_deref().unwrap_or(&[]);
                                Prediction {
                                    theta: th,
                                    value: predict_ordinal_category(th, t) as f64,
                                    probabilities: Some(ordinal_category_probs(th, t)),
                                }
                            }
                        }
                    })
                    .collect()
            })
            .collect();
        Predictions {
            response_names: self.response_schema.iter().map(|s| s.name.clone()).collect(),
            rows,
            unseen_rows,
        }
    }

    /// Unpenalized negative log-likelihood of new rows per response, using
    /// the training transforms.
    pub fn heldout_loss(&self, data: &MixedDataset, policy: UnseenCategory) -> Result<HeldoutLoss> {
        let t = self.transform(data, policy)?;
        let theta = canonical_params(&t.phi, &self.b, &self.v, &self.m)?;
        let responses = ResponseMatrix::from_dataset(data)?;
        let per_response = response_losses(&responses, &theta, self.sigma2, &self.thresholds)?;
        Ok(HeldoutLoss {
            n_rows: data.n_rows(),
            total: per_response.iter().sum(),
            per_response,
            unseen_rows: t.unseen_rows,
        })
    }

    fn check_schema(&self, data: &MixedDataset) -> Result<()> {
        let same = |a: &[VariableSchema], cols: &[crate::data::Column]| {
            a.len() == cols.len()
                && a.iter().zip(cols).all(|(s, c)| {
                    s.name == c.schema.name && s.kind == c.schema.kind && s.categories == c.schema.categories
                })
        };
        if !same(&self.predictor_schema, &data.predictors) {
            return Err(Error::InvalidSchema("predictors do not match the fitted model".into()));
        }
        if !data.responses.is_empty() && !same(&self.response_schema, &data.responses) {
            return Err(Error::InvalidSchema("responses do not match the fitted model".into()));
        }
        Ok(())
    }

    /// Builds a model from externally supplied parameters, for example to
    /// score rows with published estimates. The fit history is empty and the
    /// loss fields are zero.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parameters(
        predictor_schema: Vec<VariableSchema>,
        response_schema: Vec<VariableSchema>,
        transforms: Vec<PredictorTransform>,
        b: DMatrix<f64>,
        v: DMatrix<f64>,
        m: Vec<f64>,
        sigma2: Option<f64>,
        thresholds: Vec<Option<Vec<f64>>>,
    ) -> Result<Self> {
        let r = response_schema.len();
        let model = Self {
            config: FitConfig::new(b.ncols(), PenaltySpec::none()),
            empty_categories: vec![Vec::new(); r],
            trace: Vec::new(),
            converged: true,
            iterations: 0,
            loss: LossBreakdown::new(vec![0.0; r], 0.0),
            skipped_quantification_updates: 0,
            predictor_schema,
            response_schema,
            transforms,
            b,
            v,
            m,
            sigma2,
            thresholds,
        };
        Self::from_document(model.to_document())
    }

    pub fn to_document(&self) -> ModelDocument {
        let rows = |x: &DMatrix<f64>| (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect();
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            predictors: self.predictor_schema.clone(),
            responses: self.response_schema.clone(),
            transforms: self.transforms.clone(),
            b: rows(&self.b),
            v: rows(&self.v),
            m: self.m.clone(),
            sigma2: self.sigma2,
            thresholds: self.thresholds.clone(),
            empty_categories: self.empty_categories.clone(),
            config: self.config.clone(),
            trace: TraceSummary::from_trace(&self.trace, self.converged, self.iterations),
            loss: self.loss.clone(),
            skipped_quantification_updates: self.skipped_quantification_updates,
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self> {
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        let p = doc.predictors.len();
        let r = doc.responses.len();
        let s = doc.b.first().map_or(0, Vec::len);
        let matrix = |rows: &[Vec<f64>], nrows: usize, what: &str| -> Result<DMatrix<f64>> {
            if rows.len() != nrows || rows.iter().any(|x| x.len() != s) {
                return Err(Error::DimensionMismatch(format!("{what} has the wrong shape")));
            }
            Ok(DMatrix::from_fn(nrows, s, |i, j| rows[i][j]))
        };
        let b = matrix(&doc.b, p, "B")?;
        let v = matrix(&doc.v, r, "V")?;
        if doc.m.len() != r || doc.thresholds.len() != r || doc.transforms.len() != p {
            return Err(Error::DimensionMismatch("model document is inconsistent".into()));
        }
        for (v, t) in doc.responses.iter().zip(&doc.thresholds) {
            match (v.kind, t) {
                (VariableKind::Ordinal, Some(t)) if t.len() + 1 == v.n_categories() => {
                    Family::Ordinal { thresholds: t }.validate()?
                }
                (VariableKind::Ordinal, _) => {
                    return Err(Error::InvalidFamily(format!("`{}` needs {} thresholds", v.name, v.n_categories() - 1)))
                }
                (_, Some(_)) => {
                    return Err(Error::InvalidFamily(format!("`{}` is not ordinal but has thresholds", v.name)))
                }
                _ => {}
            }
        }
        for (v, t) in doc.predictors.iter().zip(&doc.transforms) {
            let fits = match t {
                PredictorTransform::Standardized(s) => v.kind == VariableKind::Numeric && s.sd > 0.0,
                PredictorTransform::Quantified(q) => {
                    v.kind.is_discrete() && q.values.len() == v.n_categories() && q.observed.len() == v.n_categories()
                }
            };
            if !fits {
                return Err(Error::InvalidSchema(format!("transform of `{}` does not match its kind", v.name)));
            }
        }
        Ok(Self {
            predictor_schema: doc.predictors,
            response_schema: doc.responses,
            transforms: doc.transforms,
            b,
            v,
            m: doc.m,
            sigma2: doc.sigma2,
            thresholds: doc.thresholds,
            empty_categories: doc.empty_categories,
            config: doc.config,
            trace: doc.trace.values.clone(),
            converged: doc.trace.converged,
            iterations: doc.trace.iterations,
            loss: doc.loss,
            skipped_quantification_updates: doc.skipped_quantification_updates,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Column provenance of `Φ`.
    pub fn provenance(&self) -> Vec<Provenance> {
        self.transforms.iter().map(PredictorTransform::provenance).collect()
    }
}

/// Held-out negative log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutLoss {
    pub n_rows: usize,
    pub total: f64,
    pub per_response: Vec<f64>,
    pub unseen_rows: usize,
}

impl HeldoutLoss {
    /// Mean loss per observation, summed over responses.
    pub fn per_observation(&self) -> f64 {
        self.total / self.n_rows as f64
    }

    /// Mean loss per observation-response pair.
    pub fn per_entry(&self) -> f64 {
        self.total / (self.n_rows * self.per_response.len()) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iterations: usize,
    pub converged: bool,
    pub initial: Option<f64>,
    pub last: Option<f64>,
    pub values: Vec<f64>,
}

impl TraceSummary {
    fn from_trace(trace: &[f64], converged: bool, iterations: usize) -> Self {
        Self {
            iterations,
            converged,
            initial: trace.first().copied(),
            last: trace.last().copied(),
            values: trace.to_vec(),
        }
    }
}

/// Serialized form of a [`ModelFit`]; matrices are stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub tool_version: String,
    pub predictors: Vec<VariableSchema>,
    pub responses: Vec<VariableSchema>,
    pub transforms: Vec<PredictorTransform>,
    pub b: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub m: Vec<f64>,
    pub sigma2: Option<f64>,
    pub thresholds: Vec<Option<Vec<f64>>>,
    pub empty_categories: Vec<Vec<usize>>,
    pub config: FitConfig,
    pub trace: TraceSummary,
    pub loss: LossBreakdown,
    pub skipped_quantification_updates: usize,
}
