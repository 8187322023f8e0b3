use thiserror::Error;

/// Errors raised by the numerics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectral measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("fields live on different lattices")]
    LatticeMismatch,

    #[error("layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("measure dimension {measure} does not match lattice dimension {lattice}")]
    DimensionMismatch { measure: usize, lattice: usize },

    #[error("symbol evaluated to NaN at frequency index {0}")]
    NanSymbol(usize),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error(
        "Dalang condition fails for {measure}: the integral of (1+|xi|^2)^-1 against the \
         spectral measure diverges, so the stochastic heat equation has no process solution"
    )]
    DalangConditionFails { measure: String },

    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),

    #[error("support condition violated: {0}")]
    SupportViolation(String),

    #[error("invariant violated for {quantity}: {detail}")]
    InvariantViolation { quantity: String, detail: String },

    #[error("matrix not positive semidefinite: minimum eigenvalue {min_eigenvalue:e} below -{tolerance:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("band block singular even after ridge {ridge:e}")]
    SingularBand { ridge: f64 },

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("malformed field container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invariant(quantity: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InvariantViolation {
            quantity: quantity.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
