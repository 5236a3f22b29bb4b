//! Mixed-type data ingestion and optimal-scaling transforms.
//!
//! Numeric predictors are standardized to mean zero and unit sample variance.
//! Discrete predictors (binary, nominal, ordinal) are encoded through an
//! indicator matrix and mapped to numbers through a category quantification
//! `w`, so that the transformed column is `G w`. Every transformed column is
//! normalized the same way as a standardized numeric predictor.
//!
//! Category codes are 1-based throughout the public API: a variable with `C`
//! declared categories takes codes `1..=C` in declared order.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Measurement level of a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Numeric,
    Binary,
    Nominal,
    Ordinal,
}

impl VariableKind {
    pub fn is_discrete(self) -> bool {
        !matches!(self, VariableKind::Numeric)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "numeric" | "continuous" => Ok(VariableKind::Numeric),
            "binary" => Ok(VariableKind::Binary),
            "nominal" => Ok(VariableKind::Nominal),
            "ordinal" => Ok(VariableKind::Ordinal),
            other => Err(Error::InvalidSchema(format!("unknown variable kind `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariableKind::Numeric => "numeric",
            VariableKind::Binary => "binary",
            VariableKind::Nominal => "nominal",
            VariableKind::Ordinal => "ordinal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Predictor,
    Response,
}

impl Role {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "predictor" => Ok(Role::Predictor),
            "response" => Ok(Role::Response),
            other => Err(Error::InvalidSchema(format!("unknown role `{other}`"))),
        }
    }
}

/// Declaration of one variable: its name, role, measurement level and the
/// ordered list of category labels (empty for numeric variables).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSchema {
    pub name: String,
    pub kind: VariableKind,
    pub categories: Vec<String>,
    pub role: Role,
}

impl VariableSchema {
    pub fn numeric(name: impl Into<String>, role: Role) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Numeric,
            categories: Vec::new(),
            role,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        kind: VariableKind,
        categories: impl IntoIterator<Item = S>,
        role: Role,
    ) -> Self {
        Self {
            name: name.into(),
            kind,
            categories: categories.into_iter().map(Into::into).collect(),
            role,
        }
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.categories.len();
        match self.kind {
            VariableKind::Numeric if c != 0 => Err(Error::InvalidSchema(format!(
                "numeric variable `{}` must not declare categories",
                self.name
            ))),
            VariableKind::Binary if c != 2 => Err(Error::InvalidSchema(format!(
                "binary variable `{}` must declare exactly 2 categories, found {c}",
                self.name
            ))),
            VariableKind::Nominal | VariableKind::Ordinal if c < 2 => {
                Err(Error::InvalidSchema(format!(
                    "variable `{}` must declare at least 2 categories",
                    self.name
                )))
            }
            VariableKind::Nominal if self.role == Role::Response => Err(Error::InvalidSchema(
                format!("nominal responses are not supported (`{}`)", self.name),
            )),
            _ => {
                let mut seen = HashMap::new();
                for label in &self.categories {
                    if seen.insert(label.as_str(), ()).is_some() {
                        return Err(Error::InvalidSchema(format!(
                            "duplicate category `{label}` in `{}`",
                            self.name
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// 1-based code of a category label.
    pub fn code_of(&self, label: &str) -> Result<usize> {
        self.categories
            .iter()
            .position(|c| c == label)
            .map(|i| i + 1)
            .ok_or_else(|| Error::UnknownCategory {
                variable: self.name.clone(),
                value: label.to_string(),
            })
    }
}

/// Ordered list of variable declarations (the schema sidecar).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub variables: Vec<VariableSchema>,
}

#[derive(Debug, Deserialize, Serialize)]
struct SchemaRecord {
    name: String,
    role: String,
    kind: String,
    #[serde(default)]
    categories: String,
}

impl Schema {
    pub fn new(variables: Vec<VariableSchema>) -> Result<Self> {
        let schema = Self { variables };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashMap::new();
        for v in &self.variables {
            v.validate()?;
            if names.insert(v.name.as_str(), ()).is_some() {
                return Err(Error::InvalidSchema(format!("duplicate variable `{}`", v.name)));
            }
        }
        Ok(())
    }

    pub fn predictors(&self) -> impl Iterator<Item = &VariableSchema> {
        self.variables.iter().filter(|v| v.role == Role::Predictor)
    }

    pub fn responses(&self) -> impl Iterator<Item = &VariableSchema> {
        self.variables.iter().filter(|v| v.role == Role::Response)
    }

    /// Reads a sidecar CSV with header `name,role,kind,categories`; the
    /// category list is `|`-separated in declared order.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let mut variables = Vec::new();
        for record in reader.deserialize() {
            let record: SchemaRecord = record?;
            let kind = VariableKind::parse(&record.kind)?;
            let categories = if record.categories.trim().is_empty() {
                Vec::new()
            } else {
                record.categories.split('|').map(|s| s.to_string()).collect()
            };
            variables.push(VariableSchema {
                name: record.name,
                kind,
                categories,
                role: Role::parse(&record.role)?,
            });
        }
        Self::new(variables)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        for v in &self.variables {
            writer.serialize(SchemaRecord {
                name: v.name.clone(),
                role: match v.role {
                    Role::Predictor => "predictor".into(),
                    Role::Response => "response".into(),
                },
                kind: v.kind.as_str().into(),
                categories: v.categories.join("|"),
            })?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Raw values of one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnValues {
    Real(Vec<f64>),
    /// 1-based category codes.
    Category(Vec<usize>),
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Real(v) => v.len(),
            ColumnValues::Category(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            ColumnValues::Real(v) => ColumnValues::Real(rows.iter().map(|&i| v[i]).collect()),
            ColumnValues::Category(v) => {
                ColumnValues::Category(rows.iter().map(|&i| v[i]).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub schema: VariableSchema,
    pub values: ColumnValues,
}

impl Column {
    pub fn new(schema: VariableSchema, values: ColumnValues) -> Result<Self> {
        schema.validate()?;
        match (&values, schema.kind) {
            (ColumnValues::Real(v), VariableKind::Numeric) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Parse(format!(
                        "non-finite value in numeric column `{}`",
                        schema.name
                    )));
                }
            }
            (ColumnValues::Category(codes), kind) if kind.is_discrete() => {
                let c = schema.n_categories();
                if let Some(&bad) = codes.iter().find(|&&k| k == 0 || k > c) {
                    return Err(Error::UnknownCategory {
                        variable: schema.name.clone(),
                        value: bad.to_string(),
                    });
                }
            }
            _ => {
                return Err(Error::InvalidSchema(format!(
                    "values of `{}` do not match its declared kind",
                    schema.name
                )))
            }
        }
        Ok(Self { schema, values })
    }

    pub fn real(&self) -> Option<&[f64]> {
        match &self.values {
            ColumnValues::Real(v) => Some(v),
            ColumnValues::Category(_) => None,
        }
    }

    pub fn codes(&self) -> Option<&[usize]> {
        match &self.values {
            ColumnValues::Category(v) => Some(v),
            ColumnValues::Real(_) => None,
        }
    }
}

/// Complete-case data set: predictor columns and response columns sharing
/// the same rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDataset {
    pub predictors: Vec<Column>,
    pub responses: Vec<Column>,
}

impl MixedDataset {
    pub fn new(predictors: Vec<Column>, responses: Vec<Column>) -> Result<Self> {
        let n = predictors
            .first()
            .or(responses.first())
            .map(|c| c.values.len())
            .unwrap_or(0);
        for c in predictors.iter().chain(&responses) {
            if c.values.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "column `{}` has {} rows, expected {n}",
                    c.schema.name,
                    c.values.len()
                )));
            }
        }
        if predictors.iter().any(|c| c.schema.role != Role::Predictor)
            || responses.iter().any(|c| c.schema.role != Role::Response)
        {
            return Err(Error::InvalidSchema("column role does not match its position".into()));
        }
        Ok(Self {
            predictors,
            responses,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.predictors
            .first()
            .or(self.responses.first())
            .map(|c| c.values.len())
            .unwrap_or(0)
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.len()
    }

    pub fn n_responses(&self) -> usize {
        self.responses.len()
    }

    pub fn schema(&self) -> Schema {
        Schema {
            variables: self
                .predictors
                .iter()
                .chain(&self.responses)
                .map(|c| c.schema.clone())
                .collect(),
        }
    }

    /// Subset of rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let pick = |cols: &[Column]| {
            cols.iter()
                .map(|c| Column {
                    schema: c.schema.clone(),
                    values: c.values.select(rows),
                })
                .collect()
        };
        Self {
            predictors: pick(&self.predictors),
            responses: pick(&self.responses),
        }
    }

    /// Reads an RFC-4180 CSV with a header row. Only the columns named in
    /// the schema are used; category labels must match exactly.
    pub fn from_csv_path(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let reader = csv::Reader::from_path(path)?;
        Self::from_csv_reader(reader, schema)
    }

    pub fn from_csv_reader<R: std::io::Read>(
        mut reader: csv::Reader<R>,
        schema: &Schema,
    ) -> Result<Self> {
        schema.validate()?;
        let headers = reader.headers()?.clone();
        let index: Vec<usize> = schema
            .variables
            .iter()
            .map(|v| {
                headers.iter().position(|h| h == v.name).ok_or_else(|| {
                    Error::InvalidSchema(format!("column `{}` missing from data", v.name))
                })
            })
            .collect::<Result<_>>()?;

        let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.variables.len()];
        for record in reader.records() {
            let record = record?;
            for (slot, &j) in raw.iter_mut().zip(&index) {
                slot.push(record.get(j).unwrap_or("").to_string());
            }
        }

        let mut predictors = Vec::new();
        let mut responses = Vec::new();
        for (var, cells) in schema.variables.iter().zip(raw) {
            let values = match var.kind {
                VariableKind::Numeric => ColumnValues::Real(
                    cells
                        .iter()
                        .enumerate()
                        .map(|(i, s)| {
                            let s = s.trim();
                            if s.is_empty() {
                                return Err(Error::Parse(format!(
                                    "missing value in `{}` at row {}",
                                    var.name,
                                    i + 1
                                )));
                            }
                            s.parse::<f64>().map_err(|_| {
                                Error::Parse(format!(
                                    "`{s}` is not numeric (column `{}`, row {})",
                                    var.name,
                                    i + 1
                                ))
                            })
                        })
                        .collect::<Result<_>>()?,
                ),
                _ => ColumnValues::Category(
                    cells
                        .iter()
                        .map(|s| var.code_of(s))
                        .collect::<Result<_>>()?,
                ),
            };
            let column = Column::new(var.clone(), values)?;
            match var.role {
                Role::Predictor => predictors.push(column),
                Role::Response => responses.push(column),
            }
        }
        Self::new(predictors, responses)
    }

    /// Writes the data set back to CSV using category labels.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let cols: Vec<&Column> = self.predictors.iter().chain(&self.responses).collect();
        writer.write_record(cols.iter().map(|c| c.schema.name.as_str()))?;
        for i in 0..self.n_rows() {
            let row: Vec<String> = cols
                .iter()
                .map(|c| match &c.values {
                    ColumnValues::Real(v) => format!("{}", v[i]),
                    ColumnValues::Category(k) => c.schema.categories[k[i] - 1].clone(),
                })
                .collect();
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Sample mean and standard deviation (denominator `N - 1`).
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Centres a numeric column and scales it to unit sample variance.
pub fn standardize_numeric(column: &[f64]) -> Result<Vec<f64>> {
    let scaling = NumericScaling::fit("column", column)?;
    Ok(scaling.apply(column))
}

/// Mean and SD learned on training rows, reused for new rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericScaling {
    pub mean: f64,
    pub sd: f64,
}

impl NumericScaling {
    pub fn fit(name: &str, column: &[f64]) -> Result<Self> {
        let (mean, sd) = mean_and_sd(column);
        // relative guard so that columns constant up to rounding are rejected too
        let scale = column.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
        if !(sd > 1e-13 * scale) {
            return Err(Error::ConstantColumn(name.to_string()));
        }
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, column: &[f64]) -> Vec<f64> {
        column.iter().map(|x| (x - self.mean) / self.sd).collect()
    }
}

/// One-hot encoding of a discrete column, stored by category code.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMatrix {
    /// 0-based column index of the single 1 in each row.
    columns: Vec<usize>,
    n_categories: usize,
}

/// Builds the `N × C` indicator matrix of a column of 1-based category codes.
pub fn build_indicator(codes: &[usize], n_categories: usize) -> Result<IndicatorMatrix> {
    let columns = codes
        .iter()
        .map(|&k| {
            if k == 0 || k > n_categories {
                Err(Error::UnknownCategory {
                    variable: String::new(),
                    value: k.to_string(),
                })
            } else {
                Ok(k - 1)
            }
        })
        .collect::<Result<_>>()?;
    Ok(IndicatorMatrix {
        columns,
        n_categories,
    })
}

impl IndicatorMatrix {
    pub fn n_rows(&self) -> usize {
        self.columns.len()
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    /// 0-based category index of each row.
    pub fn row_categories(&self) -> &[usize] {
        &self.columns
    }

    /// Number of rows in each category (the diagonal of `G'G`).
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_categories];
        for &c in &self.columns {
            counts[c] += 1;
        }
        counts
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.columns.len(), self.n_categories);
        for (i, &c) in self.columns.iter().enumerate() {
            g[(i, c)] = 1.0;
        }
        g
    }

    /// `G' x`: per-category sums of `x`.
    pub fn category_sums(&self, x: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_categories];
        for (&c, &v) in self.columns.iter().zip(x) {
            sums[c] += v;
        }
        sums
    }
}

/// Category quantifications of a discrete predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantification {
    pub kind: VariableKind,
    /// One value per declared category.
    pub values: Vec<f64>,
    /// Whether the category occurred in the rows the quantification was fitted on.
    pub observed: Vec<bool>,
}

impl Quantification {
    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// `φ = G w`.
pub fn apply_quantification(g: &IndicatorMatrix, w: &[f64]) -> Result<Vec<f64>> {
    if w.len() != g.n_categories() {
        return Err(Error::DimensionMismatch(format!(
            "quantification has {} entries, indicator has {} categories",
            w.len(),
            g.n_categories()
        )));
    }
    Ok(g.row_categories().iter().map(|&c| w[c]).collect())
}

/// Affinely rescales `w` (positive slope) so that `G w` has mean 0 and unit
/// sample variance. Categories absent from `G` are carried along by the same
/// affine map.
pub fn rescale_quantification(
    w: &[f64],
    g: &IndicatorMatrix,
    kind: VariableKind,
) -> Result<Quantification> {
    if w.len() != g.n_categories() {
        return Err(Error::DimensionMismatch(format!(
            "quantification has {} entries, indicator has {} categories",
            w.len(),
            g.n_categories()
        )));
    }
    let counts = g.counts();
    let n: usize = counts.iter().sum();
    if n < 2 {
        return Err(Error::DegenerateQuantification(
            "fewer than two rows".to_string(),
        ));
    }
    let nf = n as f64;
    let mean = counts
        .iter()
        .zip(w)
        .map(|(&k, &x)| k as f64 * x)
        .sum::<f64>()
        / nf;
    let ss: f64 = counts
        .iter()
        .zip(w)
        .map(|(&k, &x)| k as f64 * (x - mean).powi(2))
        .sum();
    let sd = (ss / (nf - 1.0)).sqrt();
    let scale = w
        .iter()
        .zip(&counts)
        .filter(|(_, &k)| k > 0)
        .fold(0.0_f64, |m, (x, _)| m.max(x.abs()))
        .max(1e-300);
    if !(sd > 1e-12 * scale) {
        return Err(Error::DegenerateQuantification(
            "transformed column is constant".to_string(),
        ));
    }
    Ok(Quantification {
        kind,
        values: w.iter().map(|x| (x - mean) / sd).collect(),
        observed: counts.iter().map(|&k| k > 0).collect(),
    })
}

/// How new rows with a category unseen during fitting are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnseenCategory {
    /// Raise [`Error::UnknownCategory`].
    Reject,
    /// Use quantification 0 (the centred training mean) and count the row.
    Zero,
}

/// Learned transform of one predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PredictorTransform {
    Standardized(NumericScaling),
    Quantified(Quantification),
}

/// Provenance of a column of `Φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    NumericStandardized,
    Quantified,
}

impl PredictorTransform {
    pub fn provenance(&self) -> Provenance {
        match self {
            PredictorTransform::Standardized(_) => Provenance::NumericStandardized,
            PredictorTransform::Quantified(_) => Provenance::Quantified,
        }
    }

    /// Transforms a column; returns the values and the number of rows that
    /// hit an unseen category under [`UnseenCategory::Zero`].
    pub fn apply(&self, column: &Column, policy: UnseenCategory) -> Result<(Vec<f64>, usize)> {
        match (self, &column.values) {
            (PredictorTransform::Standardized(s), ColumnValues::Real(v)) => Ok((s.apply(v), 0)),
            (PredictorTransform::Quantified(q), ColumnValues::Category(codes)) => {
                let mut unseen = 0;
                let mut out = Vec::with_capacity(codes.len());
                for &k in codes {
                    if k == 0 || k > q.values.len() {
                        return Err(Error::UnknownCategory {
                            variable: column.schema.name.clone(),
                            value: k.to_string(),
                        });
                    }
                    if q.observed[k - 1] {
                        out.push(q.values[k - 1]);
                    } else {
                        match policy {
                            UnseenCategory::Reject => {
                                return Err(Error::UnknownCategory {
                                    variable: column.schema.name.clone(),
                                    value: column.schema.categories[k - 1].clone(),
                                })
                            }
                            UnseenCategory::Zero => {
                                unseen += 1;
                                out.push(0.0);
                            }
                        }
                    }
                }
                Ok((out, unseen))
            }
            _ => Err(Error::DimensionMismatch(format!(
                "transform does not match the kind of `{}`",
                column.schema.name
            ))),
        }
    }
}

/// The transformed predictor matrix `Φ` with per-column provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedPredictors {
    pub phi: DMatrix<f64>,
    pub provenance: Vec<Provenance>,
    /// Rows that used a zero quantification for an unseen category.
    pub unseen_rows: usize,
}

/// Applies learned transforms to every predictor of a data set.
pub fn transform_predictors(
    data: &MixedDataset,
    transforms: &[PredictorTransform],
    policy: UnseenCategory,
) -> Result<TransformedPredictors> {
    if transforms.len() != data.n_predictors() {
        return Err(Error::DimensionMismatch(format!(
            "{} transforms for {} predictors",
            transforms.len(),
            data.n_predictors()
        )));
    }
    let n = data.n_rows();
    let mut phi = DMatrix::zeros(n, transforms.len());
    let mut unseen_rows = 0;
    for (p, (t, col)) in transforms.iter().zip(&data.predictors).enumerate() {
        let (values, unseen) = t.apply(col, policy)?;
        unseen_rows += unseen;
        phi.column_mut(p).copy_from_slice(&values);
    }
    Ok(TransformedPredictors {
        phi,
        provenance: transforms.iter().map(PredictorTransform::provenance).collect(),
        unseen_rows,
    })
}

/// Writes `Φ` as CSV with predictor names as header.
pub fn write_phi_csv(
    path: impl AsRef<Path>,
    names: &[String],
    phi: &DMatrix<f64>,
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(names)?;
    for i in 0..phi.nrows() {
        writer.write_record(phi.row(i).iter().map(|x| format!("{x}")))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn standardize_known_values() {
        let z = standardize_numeric(&[2.0, 4.0, 6.0]).unwrap();
        assert_abs_diff_eq!(z.as_slice(), [-1.0, 0.0, 1.0].as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn standardize_constant_column_fails() {
        assert!(matches!(
            standardize_numeric(&[0.0, 0.0, 0.0, 0.0]),
            Err(Error::ConstantColumn(_))
        ));
    }

    #[test]
    fn indicator_rows_are_one_hot() {
        let g = build_indicator(&[1, 2, 1], 2).unwrap();
        let dense = g.to_dense();
        assert_eq!(dense, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]));
        for i in 0..3 {
            assert_eq!(dense.row(i).sum(), 1.0);
        }
        assert!(matches!(build_indicator(&[3], 2), Err(Error::UnknownCategory { .. })));
        assert!(matches!(build_indicator(&[0], 2), Err(Error::UnknownCategory { .. })));
    }

    #[test]
    fn quantification_maps_categories() {
        let g = build_indicator(&[1, 2], 2).unwrap();
        assert_eq!(apply_quantification(&g, &[-1.0, 1.0]).unwrap(), vec![-1.0, 1.0]);
        assert!(matches!(
            apply_quantification(&g, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch(_))
        ));
        let constant = apply_quantification(&g, &[0.5, 0.5]).unwrap();
        assert_eq!(constant, vec![0.5, 0.5]);
        assert!(matches!(
            rescale_quantification(&[0.5, 0.5], &g, VariableKind::Nominal),
            Err(Error::DegenerateQuantification(_))
        ));
    }

    #[test]
    fn daily_limitation_quantification_lookup() {
        // Never, Seldom, Sometimes, Often, Very often
        let w = [-0.77, -0.30, 0.80, 1.90, 3.22];
        let g = build_indicator(&[5, 3, 1], 5).unwrap();
        let phi = apply_quantification(&g, &w).unwrap();
        assert_eq!(phi, vec![3.22, 0.80, -0.77]);
    }

    #[test]
    fn balanced_two_point_rescale() {
        let g = build_indicator(&[1, 2, 1, 2, 1, 2], 2).unwrap();
        let q = rescale_quantification(&[0.0, 1.0], &g, VariableKind::Binary).unwrap();
        // sample SD of (±1/2) over six rows is sqrt(6/5)/2
        let sd = (1.5_f64 / 5.0).sqrt();
        assert_abs_diff_eq!(q.values[0], -0.5 / sd, epsilon = 1e-12);
        assert_abs_diff_eq!(q.values[1], 0.5 / sd, epsilon = 1e-12);
    }

    #[test]
    fn rescale_is_idempotent() {
        let g = build_indicator(&[1, 2, 3, 3, 2, 1, 1, 3], 3).unwrap();
        let q = rescale_quantification(&[0.3, -2.0, 5.0], &g, VariableKind::Nominal).unwrap();
        let again = rescale_quantification(&q.values, &g, VariableKind::Nominal).unwrap();
        assert_abs_diff_eq!(q.values.as_slice(), again.values.as_slice(), epsilon = 1e-12);
    }

    #[test]
    fn rescale_unbalanced_counts_direct_recomputation() {
        let codes = [1, 1, 1, 1, 1, 2, 3, 3, 4, 4, 4];
        let g = build_indicator(&codes, 4).unwrap();
        let q = rescale_quantification(&[1.0, 2.5, 2.5, 7.0], &g, VariableKind::Ordinal).unwrap();
        let phi = apply_quantification(&g, &q.values).unwrap();
        let (mean, sd) = mean_and_sd(&phi);
        assert!(mean.abs() < 1e-12);
        assert!((sd * sd - 1.0).abs() < 1e-12);
        assert!(q.is_monotone());
    }

    #[test]
    fn unseen_category_policies() {
        let schema = VariableSchema::categorical("x", VariableKind::Nominal, ["a", "b", "c"], Role::Predictor);
        let col = Column::new(schema, ColumnValues::Category(vec![1, 3])).unwrap();
        let t = PredictorTransform::Quantified(Quantification {
            kind: VariableKind::Nominal,
            values: vec![-1.0, 1.0, 0.0],
            observed: vec![true, true, false],
        });
        assert!(matches!(
            t.apply(&col, UnseenCategory::Reject),
            Err(Error::UnknownCategory { .. })
        ));
        let (values, unseen) = t.apply(&col, UnseenCategory::Zero).unwrap();
        assert_eq!(values, vec![-1.0, 0.0]);
        assert_eq!(unseen, 1);
    }

    #[test]
    fn csv_round_trip_and_unknown_label() {
        let schema = Schema::new(vec![
            VariableSchema::numeric("age", Role::Predictor),
            VariableSchema::categorical("edu", VariableKind::Ordinal, ["low", "mid", "high"], Role::Predictor),
            VariableSchema::categorical("sat", VariableKind::Ordinal, ["1", "2", "3"], Role::Response),
        ])
        .unwrap();
        let text = "age,edu,sat,ignored\n30,low,1,x\n41.5,high,3,y\n";
        let data = MixedDataset::from_csv_reader(csv::Reader::from_reader(text.as_bytes()), &schema).unwrap();
        assert_eq!(data.n_rows(), 2);
        assert_eq!(data.predictors[1].codes().unwrap(), &[1, 3]);
        assert_eq!(data.responses[0].codes().unwrap(), &[1, 3]);

        let bad = "age,edu,sat\n30,lowish,1\n";
        let err = MixedDataset::from_csv_reader(csv::Reader::from_reader(bad.as_bytes()), &schema).unwrap_err();
        assert!(matches!(err, Error::UnknownCategory { .. }));
    }

    #[test]
    fn schema_rejects_bad_declarations() {
        let binary3 = VariableSchema::categorical("b", VariableKind::Binary, ["a", "b", "c"], Role::Predictor);
        assert!(binary3.validate().is_err());
        let ordinal1 = VariableSchema::categorical("o", VariableKind::Ordinal, ["a"], Role::Predictor);
        assert!(ordinal1.validate().is_err());
    }

    proptest! {
        #[test]
        fn standardize_is_idempotent(values in prop::collection::vec(-1e3f64..1e3, 3..40)) {
            prop_assume!(mean_and_sd(&values).1 > 1e-6);
            let once = standardize_numeric(&values).unwrap();
            let twice = standardize_numeric(&once).unwrap();
            let (mean, sd) = mean_and_sd(&once);
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((sd * sd - 1.0).abs() < 1e-10);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }

        #[test]
        fn rescaled_columns_are_normalized(
            codes in prop::collection::vec(1usize..=4, 6..60),
            w in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let g = build_indicator(&codes, 4).unwrap();
            let phi = apply_quantification(&g, &w).unwrap();
            prop_assume!(mean_and_sd(&phi).1 > 1e-6);
            let mut sorted = w.clone();
            sorted.sort_by(f64::total_cmp);
            let q = rescale_quantification(&sorted, &g, VariableKind::Ordinal).unwrap();
            let phi = apply_quantification(&g, &q.values).unwrap();
            let (mean, sd) = mean_and_sd(&phi);
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((sd * sd - 1.0).abs() < 1e-10);
            prop_assert!(q.is_monotone());
        }
    }
}
