use thiserror::Error;

/// Failures mapped onto the process exit-code contract.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit 1: bad flags, bad config, or an impossible request.
    #[error("usage: {0}")]
    Usage(String),
    /// Exit 2: the model or data do not satisfy a precondition.
    #[error("precondition: {0}")]
    Precondition(String),
    /// Exit 3: an asserted numerical invariant failed.
    #[error("invariant failed for {quantity}: {detail}")]
    Invariant { quantity: String, detail: String },
    /// Exit 1: the filesystem refused a read or write.
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 1,
            CliError::Precondition(_) => 2,
            CliError::Invariant { .. } => 3,
        }
    }

    pub fn invariant(quantity: &str, detail: impl Into<String>) -> Self {
        CliError::Invariant {
            quantity: quantity.into(),
            detail: detail.into(),
        }
    }
}

impl From<spde_lab::Error> for CliError {
    fn from(e: spde_lab::Error) -> Self {
        use spde_lab::Error as E;
        match e {
            E::InvariantViolation { quantity, detail } => CliError::Invariant { quantity, detail },
            E::NotPositiveSemidefinite { .. } => CliError::invariant("covariance positive semidefiniteness", e.to_string()),
            E::SingularBand { .. } => CliError::invariant("band covariance factorization", e.to_string()),
            E::DalangConditionFails { .. }
            | E::UnsupportedMeasure(_)
            | E::InvalidMeasure(_)
            | E::SupportViolation(_)
            | E::DimensionMismatch { .. } => CliError::Precondition(e.to_string()),
            E::Io(_) | E::Json(_) | E::Format(_) => CliError::Io(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
