use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (asymmetry {asymmetry:e}, norm {norm:e})")]
    NotHermitian { asymmetry: f64, norm: f64 },

    #[error("received-signal covariance is singular (smallest eigenvalue {0:e})")]
    SingularCovariance(f64),

    #[error("subcarrier {subcarrier} is claimed by more than one D2D pair")]
    DuplicateOccupancy { subcarrier: usize },

    #[error("D2D pair {0} has no subcarrier assigned")]
    UnassignedPair(usize),

    #[error("subcarrier {subcarrier} is not used by cellular user {user}")]
    OutsideSupport { user: usize, subcarrier: usize },

    #[error("registry mismatch: {left} vs {right} variables")]
    RegistryMismatch { left: usize, right: usize },

    #[error("problem is infeasible (phase-1 slack {slack:e})")]
    Infeasible { slack: f64 },

    #[error("solver stopped after {0} Newton steps without converging")]
    MaxIterations(usize),

    #[error("config error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config field `{field}` out of range: {message}")]
    ConfigRange { field: &'static str, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
