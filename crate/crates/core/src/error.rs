use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("conditioning covariance is singular at pivot {pivot}")]
    SingularConditioner { pivot: usize },

    #[error("matrix is not symmetric: |m[{row},{col}] - m[{col},{row}]| = {gap:e}")]
    Asymmetric { row: usize, col: usize, gap: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("insufficient data: {what} needs at least {required} rows, got {available}")]
    InsufficientData {
        what: &'static str,
        required: usize,
        available: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("collinear regressors: column {column} ({label}) is a linear combination of earlier columns")]
    CollinearRegressors { column: usize, label: String },

    #[error("residual covariance of the full model is singular; the predictee is perfectly predictable")]
    DegenerateResiduals,

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("model is not stationary: companion spectral radius {radius} >= 1")]
    NonStationary { radius: f64 },

    #[error("fixed-point iteration did not converge after {iterations} steps")]
    Convergence { iterations: usize },

    #[error("invalid lag specification: {0}")]
    InvalidLags(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any attached context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
