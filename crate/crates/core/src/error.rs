use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("agent {agent} has no incident edge")]
    EmptyRow { agent: usize },

    #[error("edge {index} ({u}, {v}) has non-positive weight {weight}")]
    NonPositiveWeight {
        index: usize,
        u: usize,
        v: usize,
        weight: f64,
    },

    #[error("support graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("row {row} is not stochastic: sum {sum}")]
    NotStochastic { row: usize, sum: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{n} agents exceeds the limit of {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("dense system is singular or badly conditioned (residual {residual:e})")]
    SingularSystem { residual: f64 },

    #[error("inconclusive: error radius overlaps the innate opinion for agents {agents:?}")]
    Inconclusive { agents: Vec<usize> },

    #[error("iteration budget exceeded after {iterations} iterations (phase {phase})")]
    IterationBudgetExceeded { phase: usize, iterations: u64 },

    #[error("precondition unmet: {0}")]
    PreconditionUnmet(String),

    #[error("local optimality check failed for agents {agents:?}")]
    VerificationFailed { agents: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
