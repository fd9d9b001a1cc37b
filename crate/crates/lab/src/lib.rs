//! Threaded executor, run configuration, file formats and the `contention`
//! command line built on `contention-core`.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;
pub mod pool;

pub use config::RunConfig;
pub use pool::ThreadPool;

/// Why a run stopped. Validation failures exit with 1, runtime failures
/// with 2.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "invalid input: {e:#}"),
            Failure::Runtime(e) => write!(f, "run failed: {e:#}"),
        }
    }
}

impl From<contention_core::Error> for Failure {
    fn from(e: contention_core::Error) -> Self {
        use contention_core::Error as E;
        match e {
            E::InfiniteLatency { .. } | E::Singular | E::Residual { .. } | E::IncompleteAtHorizon { .. } => {
                Failure::Runtime(e.into())
            }
            _ => Failure::Validation(e.into()),
        }
    }
}
