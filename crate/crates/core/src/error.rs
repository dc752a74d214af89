use thiserror::Error;

/// Errors produced anywhere in the estimation and backtesting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("eigendecomposition did not converge after {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },

    #[error("returns panel is empty")]
    EmptyPanel,

    #[error("covariance denominator is degenerate for T = {t}")]
    DegenerateDenominator { t: usize },

    #[error("asset {asset} has zero sample variance")]
    ZeroVarianceColumn { asset: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver did not converge after {iterations} sweeps (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("variance must be strictly positive: {0}")]
    NonpositiveVariance(String),

    #[error("shrinkage intensity {0} is outside [0, 1]")]
    RhoOutOfRange(f64),

    #[error("factor rank {k} must be smaller than the dimension {n}")]
    RankTooLarge { k: usize, n: usize },

    #[error("no threshold on the grid restores positive definiteness")]
    NoPdThreshold,

    #[error("factor design matrix is singular")]
    SingularDesign,

    #[error("window mismatch: returns have {returns} rows, factors have {factors}")]
    WindowMismatch { returns: usize, factors: usize },

    #[error("return target is degenerate: expected returns are collinear with the budget vector")]
    DegenerateTarget,

    #[error("insufficient history: need {required} rows before index {as_of}, have {available}")]
    InsufficientHistory {
        required: usize,
        available: usize,
        as_of: usize,
    },

    #[error("universe too small: need {required} assets, only {available} survive")]
    UniverseTooSmall { required: usize, available: usize },

    #[error("market caps are missing: {0}")]
    MissingCaps(String),

    #[error("insufficient data: need at least {required} observations, got {actual}")]
    InsufficientData { required: usize, actual: usize },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("duplicate cell for date {date} and asset {asset}")]
    DuplicateCell { date: String, asset: String },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters supplied by the caller.
    Usage,
    /// Malformed, missing or insufficient data.
    Data,
    /// The numerics failed (non-convergence, loss of definiteness).
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::RhoOutOfRange(_)
            | Error::RankTooLarge { .. }
            | Error::InvalidSpec(_)
            | Error::NonpositiveVariance(_) => ErrorKind::Usage,
            Error::NotPositiveDefinite { .. }
            | Error::ConvergenceFailure { .. }
            | Error::NonConvergence { .. }
            | Error::SingularDesign
            | Error::NoPdThreshold
            | Error::DegenerateTarget => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    /// Stable name of the error variant, used in command-line messages.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NonFinite { .. } => "NonFinite",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::EmptyPanel => "EmptyPanel",
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::ZeroVarianceColumn { .. } => "ZeroVarianceColumn",
            Error::InvalidInput(_) => "InvalidInput",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::NonpositiveVariance(_) => "NonpositiveVariance",
            Error::RhoOutOfRange(_) => "RhoOutOfRange",
            Error::RankTooLarge { .. } => "RankTooLarge",
            Error::NoPdThreshold => "NoPdThreshold",
            Error::SingularDesign => "SingularDesign",
            Error::WindowMismatch { .. } => "WindowMismatch",
            Error::DegenerateTarget => "DegenerateTarget",
            Error::InsufficientHistory { .. } => "InsufficientHistory",
            Error::UniverseTooSmall { .. } => "UniverseTooSmall",
            Error::MissingCaps(_) => "MissingCaps",
            Error::InsufficientData { .. } => "InsufficientData",
            Error::Parse { .. } => "Parse",
            Error::DuplicateCell { .. } => "DuplicateCell",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
