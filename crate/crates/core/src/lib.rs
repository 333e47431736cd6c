//! Analytic and simulated performance of time-frequency resource conversion
//! (TFRC) based call admission control in a single cell.
//!
//! The crate has three layers:
//!
//! - [`model`]: cell state, withdrawal schedule, admission rules, conversion.
//! - [`ctmc`], [`user_chain`], [`system_chain`]: the Markov model with a stair
//!   (Erlang) approximation of the conversion period, and its metrics.
//! - [`des`]: an event-level simulator with an exact period, used to check the
//!   analytic model.

pub mod ctmc;
pub mod des;
pub mod model;
pub mod system_chain;
pub mod user_chain;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Ctmc(#[from] ctmc::CtmcError),
    #[error(transparent)]
    Sim(#[from] des::SimError),
}
