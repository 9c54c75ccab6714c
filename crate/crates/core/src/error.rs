use thiserror::Error;

/// Errors raised by the samplers, the tree builders and the analysis.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A scripted bit source ran out before the sampler terminated.
    #[error("bit source exhausted after {consumed} bits")]
    SourceExhausted { consumed: u64 },

    #[error("die size {n} is outside the supported range 1..={max}")]
    DieOutOfRange { n: String, max: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("cannot parse distribution: {0}")]
    Parse(String),

    /// Leaf masses of a tree do not add up to the target distribution.
    #[error("tree masses do not reproduce the distribution: {0}")]
    MassMismatch(String),

    #[error("malformed tree: {0}")]
    MalformedTree(String),

    #[error("expected flips for n = {n} is {expected}, outside [{lower}, {upper}]")]
    BoundViolation {
        n: u64,
        expected: String,
        lower: u32,
        upper: u32,
    },

    /// The binary expansion period is too long to sum in closed form.
    #[error("binary expansion period exceeds {limit} digits")]
    PeriodTooLong { limit: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
