use thiserror::Error;

/// Errors raised while building or validating configuration values.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parameter `{key}` = {value} is out of range: {expected}")]
    OutOfRange {
        key: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Invalid(String),
}

/// Contract violations on the scalar helpers and the geometry layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractError {
    #[error("penalty parameter {0} is outside [0, 1]")]
    ThetaOutOfRange(f64),
    #[error("negative infeasibility measure: {0}")]
    NegativeMeasure(f64),
    #[error("point is not a member of the set (violation {violation:.3e}, tolerance {tolerance:.3e})")]
    NotMember { violation: f64, tolerance: f64 },
}

/// Errors produced by an oracle evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("point lies outside the domain box (violation {0:.3e})")]
    OutsideDomain(f64),
    #[error("point has dimension {found}, problem has dimension {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("oracle returned a non-finite value")]
    NonFinite,
}

/// Failures of a solver run that are not ordinary termination statuses.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("oracle failure at iteration {iteration}: {source}")]
    Oracle {
        iteration: usize,
        #[source]
        source: OracleError,
    },
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("restoration exceeded its safety cap of {cap} inner iterations")]
    AbnormalTermination { cap: usize },
}

impl From<OracleError> for SolverError {
    fn from(source: OracleError) -> Self {
        SolverError::Oracle { iteration: 0, source }
    }
}

impl SolverError {
    /// Attaches the outer iteration index to an oracle failure.
    pub fn at_iteration(self, k: usize) -> Self {
        match self {
            SolverError::Oracle { source, .. } => SolverError::Oracle { iteration: k, source },
            other => other,
        }
    }
}
