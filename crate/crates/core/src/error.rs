use thiserror::Error;

/// Errors raised by the simulation and measurement layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain of the operation (non-finite voltage,
    /// gate fraction outside `[0, 1]`, empty sample, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A parameter set or network layout that violates a model invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (e.g. a negative decay rate).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The a-priori voltage bound needs a strictly positive leak conductance.
    #[error("voltage bound unavailable: leak conductance g_L = {0} is not positive")]
    BoundUnavailable(f64),

    /// Two series or recordings that should share a time grid do not.
    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    /// A convergence or rate study could not be carried out.
    #[error("study error: {0}")]
    Study(String),

    /// A scenario run failed (replica failure, output collision, I/O).
    #[error("run failed: {0}")]
    Run(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
