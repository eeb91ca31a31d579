use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("time {t} outside interval [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },

    #[error("exponential overflow: |K_a| = {k_a:.6e} exceeds 700")]
    Overflow { k_a: f64 },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("kernel is not positive semidefinite: eigenvalue {0:.3e}")]
    NotPositiveSemidefinite(f64),

    #[error("tensor grid of {points} points exceeds cap {cap}; use Monte Carlo mode")]
    TensorCap { points: f64, cap: f64 },

    #[error("numerical quality: {0}")]
    Numerical(String),

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("singular: {0}")]
    Singular(String),

    #[error("density undefined at x = {x}: {reason}")]
    UndefinedPoint { x: f64, reason: String },

    #[error("grid mismatch: {0} vs {1} values")]
    GridMismatch(usize, usize),

    #[error("at (x = {x}, t = {t}, N = {n}): {source}")]
    AtPoint {
        x: f64,
        t: f64,
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub fn at(self, x: f64, t: f64, n: usize) -> Error {
        match self {
            e @ Error::AtPoint { .. } => e,
            e => Error::AtPoint { x, t, n, source: Box::new(e) },
        }
    }

    /// Short machine-readable kind tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Unsupported(_) => "unsupported",
            Error::Domain { .. } => "domain",
            Error::Overflow { .. } => "overflow",
            Error::Validation(_) => "validation",
            Error::NotPositiveSemidefinite(_) => "not_psd",
            Error::TensorCap { .. } => "tensor_cap",
            Error::Numerical(_) => "numerical",
            Error::Hypothesis(_) => "hypothesis",
            Error::Singular(_) => "singular",
            Error::UndefinedPoint { .. } => "undefined_point",
            Error::GridMismatch(..) => "grid_mismatch",
            Error::AtPoint { source, .. } => source.kind(),
            Error::Io { .. } => "io",
        }
    }
}
