use thiserror::Error;

/// Coarse error category used by callers (e.g. the CLI) to map failures to
/// exit codes without matching on every variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad arguments or configuration.
    Usage,
    /// Unreadable, malformed, or insufficient input data.
    Data,
    /// A numerical procedure failed (ill-conditioning, degeneracy, ...).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("HAR recursion is nonstationary: b1+b2+b3 = {sum} >= 1")]
    NonstationaryHar { sum: f64 },

    #[error("could not draw a positive volatility path for day {day} within {attempts} redraw rounds")]
    PositivityFailure { day: usize, attempts: u32 },

    #[error("kernel window at tau/n = {tau_frac} contains no pre-averaged returns")]
    EmptyKernelWindow { tau_frac: f64 },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank {r} out of range (must be between 1 and {max})")]
    RankOutOfRange { r: usize, max: usize },

    #[error("core matrix is ill-conditioned: cond = {cond:.3e} exceeds {limit:.1e}")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            InvalidParameter(_) | RankOutOfRange { .. } => ErrorCategory::Usage,
            Io(_) | Csv(_) | Json(_) | Parse(_) | InsufficientData(_) | DimensionMismatch(_)
            | IndexOutOfRange(_) => ErrorCategory::Data,
            NonstationaryHar { .. }
            | PositivityFailure { .. }
            | EmptyKernelWindow { .. }
            | IllConditioned { .. }
            | NonFinite(_)
            | Degenerate(_) => ErrorCategory::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
