//! Event-level simulator of the cell with an exact conversion period.
//!
//! Users occupy `K` slots. Each connection carries its remaining work in
//! full-rate seconds and drains it at `allocated / width`, so a background
//! connection that lost subchannels slows down and a frozen one stops.
//! Handoff inflow is driven by the analytic [`HandoffRates`](crate::user_chain::HandoffRates).

mod engine;
mod estimate;
mod ks;
mod stats;

use thiserror::Error;

pub use engine::{replicate, run, run_traced, SimOptions};
pub use estimate::{estimate, Interval, SimReport};
pub use ks::{ks_exponential, kolmogorov_q, recovery_holding_test, KsReport, KS_ALPHA};
pub use stats::{CompletionRecord, SimStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("simulator invariant violated at t={time}: {what}")]
    Invariant { time: f64, what: String },
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
    #[error("need at least {needed} replications, got {got}")]
    InsufficientReplications { needed: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("trace output failed: {0}")]
    Trace(String),
}
