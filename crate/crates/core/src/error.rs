use thiserror::Error;

/// Errors raised across ingestion, fitting, model selection and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("unknown category {value} for variable `{variable}`")]
    UnknownCategory { variable: String, value: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("quantification for `{0}` is constant")]
    DegenerateQuantification(String),

    #[error("invalid response family parameters: {0}")]
    InvalidFamily(String),

    #[error("invalid penalty combination: lasso and group lasso cannot both be active")]
    InvalidPenaltyCombination,

    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),

    #[error("linear system is numerically singular: {0}")]
    SingularSystem(String),

    #[error("cross-product for the loadings update has no positive singular value")]
    DegenerateSvd,

    #[error("ordinal response `{0}` has fewer than two observed categories")]
    EmptyCategory(String),

    #[error("penalized loss increased from {previous} to {current} at iteration {iteration}")]
    NonDecreasingLoss {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no grid cell satisfies the selection threshold")]
    EmptyFeasibleSet,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name, used in machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ConstantColumn(_) => "ConstantColumn",
            Error::UnknownCategory { .. } => "UnknownCategory",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::DegenerateQuantification(_) => "DegenerateQuantification",
            Error::InvalidFamily(_) => "InvalidFamily",
            Error::InvalidPenaltyCombination => "InvalidPenaltyCombination",
            Error::InvalidPenalty(_) => "InvalidPenalty",
            Error::SingularSystem(_) => "SingularSystem",
            Error::DegenerateSvd => "DegenerateSVD",
            Error::EmptyCategory(_) => "EmptyCategory",
            Error::NonDecreasingLoss { .. } => "NonDecreasingLoss",
            Error::InvalidSchema(_) => "InvalidSchema",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptyFeasibleSet => "EmptyFeasibleSet",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }

    /// True when the error stems from user-supplied input rather than an internal failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::ConstantColumn(_)
                | Error::UnknownCategory { .. }
                | Error::DimensionMismatch(_)
                | Error::InvalidSchema(_)
                | Error::InvalidConfig(_)
                | Error::InvalidPenaltyCombination
                | Error::InvalidPenalty(_)
                | Error::InvalidFamily(_)
                | Error::EmptyCategory(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
