use thiserror::Error;

/// Errors raised by model construction, simulation and the optimality tooling.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("non-finite value while {context}")]
    NonFinite { context: String },

    #[error("integration blew up after t = {last_good_time}")]
    IntegrationBlowup { last_good_time: f64 },

    #[error("ride infeasible at t = {time}: constraint `{constraint}` has residual {residual} even at the minimum input")]
    RideInfeasible {
        time: f64,
        constraint: String,
        residual: f64,
    },

    #[error("constraint set is empty")]
    EmptyConstraintSet,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("trajectory has no interior tail")]
    NoInteriorTail,

    #[error("improvement certificate failed: {0}")]
    CertificationFailed(String),

    #[error("enumeration of {requested} sequences exceeds cap {cap}")]
    OracleCapExceeded { requested: f64, cap: u64 },

    #[error("every enumerated control sequence is inadmissible")]
    AllInadmissible,

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dim(what: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            got,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
