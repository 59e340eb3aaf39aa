//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A simulation or scenario configuration violates an invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Channel coefficients for which the conditional success probabilities
    /// are undefined (cumulative mass reaches 1 before the last slot).
    #[error("degenerate channel coefficients: {0}")]
    DegenerateCoefficients(String),

    /// Chi-square test cannot be carried out (fewer than two cells remain
    /// after low-expected-count merging).
    #[error("goodness-of-fit test inapplicable: {0} cell(s) after merging")]
    TestInapplicable(usize),

    /// The forward recursion assigned zero probability to an observed output,
    /// i.e. the sequence is impossible under the supplied model.
    #[error("observation impossible under model at step {step}")]
    InconsistentModel { step: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
