//! Game-theoretic contention resolution on a slotted collision channel with
//! acknowledgment-only feedback.
//!
//! The crate is `no_std` (it needs `alloc`). It contains:
//!
//! - [`protocol`]: transmission histories, the protocol families (age-based,
//!   backoff, deadline, stationary two-player) and the deadline schedule.
//! - [`chain`]: absorbing Markov chains, hitting-time solves, and the two-player
//!   chains and best-response MDP.
//! - [`channel`]: the slot-by-slot simulator and the Monte Carlo latency
//!   estimator.
//! - [`equilibrium`]: deviation constructions, exact two-player deviation
//!   analysis, the stationary uniqueness scan and the impossibility probes.
//! - [`experiments`]: efficiency experiments for the deadline protocol.
//!
//! Trial-level parallelism is delegated to an [`exec::Executor`]; the crate only
//! ships a sequential one. Aggregates are built from integer sums so the result
//! never depends on how trials were scheduled.

#![no_std]

extern crate alloc;

pub mod chain;
pub mod channel;
pub mod equilibrium;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod protocol;

pub use error::{Error, Result};
pub use exec::{Executor, Sequential};
pub use protocol::{ProtocolClass, ProtocolSpec, TransmissionHistory};

/// Absolute tolerance used when comparing probabilities that should be equal.
pub const PROB_TOLERANCE: f64 = 1e-12;
