use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("history has {got} entries but slot {slot} needs {expected}")]
    HistoryLength { slot: u64, expected: usize, got: usize },

    #[error("slot index must be at least 1")]
    ZeroSlot,

    #[error("history entry {value} at position {index} is not 0 or 1")]
    NotBinary { index: usize, value: u8 },

    #[error("probability {value} is outside [0, 1]")]
    ProbabilityOutOfRange { value: f64 },

    #[error("probability sequence must not be empty")]
    EmptySequence,

    #[error("beta must lie strictly between 0 and 1, got {0}")]
    InvalidBeta(f64),

    #[error("invalid player count {got}: {reason}")]
    InvalidPlayerCount { got: usize, reason: &'static str },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("target is unreachable from state {state}: expected latency is infinite")]
    InfiniteLatency { state: String },

    #[error("linear system is singular")]
    Singular,

    #[error("hitting-time residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },

    #[error("unsupported protocol class for {operation}: {class}")]
    Unsupported { operation: &'static str, class: &'static str },

    #[error("prefix has probability zero under the base protocol")]
    InconsistentPrefix,

    #[error("no slot satisfying the blocking conditions within {limit} slots")]
    TauStarNotFound { limit: u64 },

    #[error("completion probability {completion} at horizon {horizon} is below {required}")]
    IncompleteAtHorizon { completion: f64, horizon: u64, required: f64 },

    #[error("precondition failed: {0}")]
    Precondition(&'static str),
}
