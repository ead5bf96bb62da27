use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("modulus {0} is not a prime >= 2")]
    NotPrime(i64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix columns do not generate Z_q^n (rank {rank} < {n})")]
    NotFullRank { rank: usize, n: usize },

    #[error("linear system has no solution")]
    NoSolution,

    #[error("support budget exceeded: needed {needed}, budget {budget}")]
    BudgetExceeded { needed: usize, budget: usize },

    #[error("empty support: {0}")]
    EmptySupport(String),

    #[error("register layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("no register named {0}")]
    NoSuchRegister(String),

    #[error("parameter violation: {0}")]
    BadParams(String),

    #[error("retry budget exhausted in {0}")]
    RetriesExhausted(&'static str),

    #[error("malformed circuit: {0}")]
    MalformedCircuit(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
