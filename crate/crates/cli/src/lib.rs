//! Library side of the `tfrc` command: run specification, result documents and
//! the solve / simulate / compare / sweep workflows.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;
use tfrc_core::ctmc::CtmcError;
use tfrc_core::des::SimError;
use tfrc_core::model::ModelError;

pub use config::{ConfigError, RunSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Result documents that cannot be compared.
    #[error("{0}")]
    Mismatch(String),
    #[error(transparent)]
    Core(#[from] tfrc_core::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    /// 2 invalid configuration, 3 state space over the cap, 4 solver failure,
    /// 5 simulator invariant violated, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use tfrc_core::Error as E;
        match self {
            CliError::Config(_) | CliError::Mismatch(_) => 2,
            CliError::Core(E::Model(ModelError::CapacityExplosion { .. })) => 3,
            CliError::Core(E::Model(_)) => 2,
            CliError::Core(E::Ctmc(_)) => 4,
            CliError::Core(E::Sim(SimError::Invariant { .. })) => 5,
            CliError::Core(E::Sim(SimError::InvalidOptions(_) | SimError::InsufficientReplications { .. })) => 2,
            CliError::Core(E::Sim(_)) | CliError::Io { .. } | CliError::Output(_) => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Core(e.into())
    }
}

impl From<CtmcError> for CliError {
    fn from(e: CtmcError) -> Self {
        CliError::Core(e.into())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Core(e.into())
    }
}
