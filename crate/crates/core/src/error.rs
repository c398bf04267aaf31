use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or configuration value is outside its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pareto shape alpha = {0} gives an infinite mean (alpha must exceed 1)")]
    InfiniteMean(f64),

    #[error("log of non-positive value {value} at tape node {node}")]
    LogDomain { node: usize, value: f64 },

    #[error("NaN encountered in backward sweep at node {node} ({kind})")]
    NanInBackward { node: usize, kind: &'static str },

    #[error("non-finite value in waterfall step {step} at period {period}")]
    NonFiniteStep { step: &'static str, period: usize },

    #[error("negative available cash {0} passed to the waterfall")]
    NegativeCash(f64),

    #[error("non-finite present value on path {0}")]
    NonFinitePath(usize),

    #[error("gradients require smooth mode")]
    GradientsRequireSmooth,

    #[error("{0} not bracketed")]
    NotBracketed(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite objective value at evaluation point")]
    NonFiniteObjective,
}

impl Error {
    /// True when the error stems from user input rather than an internal fault.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InfiniteMean(_)
                | Error::NegativeCash(_)
                | Error::GridMismatch(_)
                | Error::GradientsRequireSmooth
                | Error::NotBracketed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
