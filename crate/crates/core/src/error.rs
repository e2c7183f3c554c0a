use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {what} at {location}")]
    NonFinite { what: String, location: String },

    #[error("FNE degenerate or non-unique at stage {stage} (condition number {condition:.3e})")]
    DegenerateNash { stage: usize, condition: f64 },

    #[error("singular control Hessian at stage {stage} (condition number {condition:.3e}); add control regularization")]
    SingularControlHessian { stage: usize, condition: f64 },

    #[error("iterative solve diverged at iteration {iteration}: no step size produced a finite, in-bounds rollout")]
    Divergence { iteration: usize },

    #[error("stage {stage} out of range (horizon {horizon})")]
    StageOutOfRange { stage: usize, horizon: usize },

    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    #[error("record has no beliefs (complete-information rollout)")]
    NoBeliefs,

    #[error("records are not comparable: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(
    context: impl Into<String>,
    expected: impl ToString,
    actual: impl ToString,
) -> Error {
    Error::Dimension {
        context: context.into(),
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
