use thiserror::Error;

use crate::expr::ExprError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coordinates {coords:?} lie outside the domain of chart {chart}")]
    ChartDomainViolation { chart: usize, coords: Vec<f64> },

    #[error("degenerate metric (smallest eigenvalue {min_eigenvalue:e})")]
    DegenerateMetric { min_eigenvalue: f64 },

    #[error("constraint differential is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("tangent space is zero-dimensional")]
    EmptyTangent,

    #[error("no chart contains the point with margin {margin}")]
    NoChartWithMargin { margin: f64 },

    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("gave up after {restarts} step-size halvings (last epsilon {epsilon})")]
    TooManyRestarts { restarts: usize, epsilon: f64 },

    #[error("walker {index}: {source}")]
    Walker { index: usize, source: Box<Error> },

    #[error("no exponential-map oracle: {0}")]
    OracleUnavailable(String),

    #[error("insufficient samples: smallest expected bin count is {min_expected:.3} (< 5)")]
    InsufficientSamples { min_expected: f64 },

    #[error("dimension error: {0}")]
    DimensionError(String),

    #[error("operation requires {expected}")]
    WrongRepresentation { expected: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Expr(#[from] ExprError),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("unknown manifold `{0}`")]
    UnknownManifold(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Walker { source, .. } => source.is_numerical(),
            Error::NoConvergence { .. }
            | Error::TooManyRestarts { .. }
            | Error::ChartDomainViolation { .. }
            | Error::DegenerateMetric { .. }
            | Error::RankDeficient { .. }
            | Error::NoChartWithMargin { .. }
            | Error::InsufficientSamples { .. } => true,
            Error::Expr(e) => matches!(e, ExprError::Domain { .. }),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
