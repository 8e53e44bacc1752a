use thiserror::Error;

/// Errors raised by the inference, sampling and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CotError {
    #[error("chain did not reach the stop symbol within {max_len} messages")]
    Truncation { max_len: usize },

    #[error("conditioning event has probability zero: {what}")]
    ConditioningOnNullEvent { what: String },

    #[error("context prior is not uniform")]
    PriorNotUniform,

    #[error("context `{context}` has zero prior probability")]
    ZeroPriorContext { context: String },

    #[error("probability underflows f64 (ln p = {ln_value})")]
    Underflow { ln_value: f64 },

    #[error("delta must lie in [0, 0.5), got {0}")]
    DeltaOutOfRange(f64),

    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),

    #[error("infeasible generator parameters: {0}")]
    InfeasibleSizes(String),

    #[error("forward recursion requires a MARKOV transition kernel")]
    NotMarkov,

    #[error("unknown {kind} `{name}`")]
    UnknownSymbol { kind: &'static str, name: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = CotError> = std::result::Result<T, E>;
