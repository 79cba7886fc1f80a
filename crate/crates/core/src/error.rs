use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid upload rate {0} bits/s (must be finite and > 0)")]
    InvalidRate(f64),

    #[error("reward undefined: local {0} is zero")]
    DivisionUndefined(&'static str),

    #[error("empty transport problem: {0}")]
    EmptyProblem(&'static str),

    #[error("sinkhorn scaling underflowed at iteration {iteration} (epsilon {epsilon} too small for linear-domain scaling)")]
    Underflow { iteration: usize, epsilon: f64 },

    #[error("transport plan carries no dual potentials")]
    MissingPotentials,

    #[error("non-finite logits for state")]
    NonFiniteLogits,

    #[error("non-finite parameter update")]
    NonFiniteUpdate,

    #[error("iteration {iteration} outside [1, {max_iter}]")]
    IterationOutOfRange { iteration: usize, max_iter: usize },

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameters(msg.into())
}
