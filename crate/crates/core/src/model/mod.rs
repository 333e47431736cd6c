//! Domain types of the single-cell TFRC model and the pure functions over them:
//! withdrawal schedule, cell load, admission rules and the periodic conversion.

mod admission;
mod config;
mod schedule;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use admission::{handoff_outcome, new_call_admissible, HandoffOutcome};
pub(crate) use admission::outcome_at_load;
pub use config::ModelConfig;
pub use schedule::WithdrawalSchedule;
pub use state::{
    enumerate_states, enumerate_states_with_limit, SystemState, DEFAULT_STATE_LIMIT,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("unknown config field `{0}`")]
    UnknownField(String),
    #[error("state has {busy} busy users but the cell only holds {users}")]
    InfeasibleState { busy: u32, users: u32 },
    #[error("state space too large: more than {limit} stair states")]
    CapacityExplosion { limit: usize },
}

/// Connection type: wide-band T1 or narrow-band T2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConnType {
    T1,
    T2,
}

impl ConnType {
    pub const ALL: [ConnType; 2] = [ConnType::T1, ConnType::T2];

    pub fn index(self) -> usize {
        match self {
            ConnType::T1 => 0,
            ConnType::T2 => 1,
        }
    }
}

/// The four kinds of two-connection users, named by (background, foreground):
/// I = (T1, T1), II = (T1, T2), III = (T2, T1), IV = (T2, T2).
///
/// Only the background connection is subject to withdrawal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MultiClass {
    I,
    II,
    III,
    IV,
}

impl MultiClass {
    pub const ALL: [MultiClass; 4] = [MultiClass::I, MultiClass::II, MultiClass::III, MultiClass::IV];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn background(self) -> ConnType {
        match self {
            MultiClass::I | MultiClass::II => ConnType::T1,
            MultiClass::III | MultiClass::IV => ConnType::T2,
        }
    }

    pub fn foreground(self) -> ConnType {
        match self {
            MultiClass::I | MultiClass::III => ConnType::T1,
            MultiClass::II | MultiClass::IV => ConnType::T2,
        }
    }

    /// Class a single-connection user of type `existing` enters when it starts
    /// a `new` connection; the new one takes the foreground.
    pub fn from_pair(existing: ConnType, new: ConnType) -> MultiClass {
        match (existing, new) {
            (ConnType::T1, ConnType::T1) => MultiClass::I,
            (ConnType::T1, ConnType::T2) => MultiClass::II,
            (ConnType::T2, ConnType::T1) => MultiClass::III,
            (ConnType::T2, ConnType::T2) => MultiClass::IV,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            MultiClass::I => "I",
            MultiClass::II => "II",
            MultiClass::III => "III",
            MultiClass::IV => "IV",
        }
    }
}

/// State of a single user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserState {
    Idle,
    Single(ConnType),
    /// Two connections; `stage` counts the withdrawal rounds applied so far.
    Multi { class: MultiClass, stage: usize },
}

impl std::fmt::Display for UserState {
    /// `idle`, `T1`, `T2`, or class and stage such as `II:1`.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UserState::Idle => f.write_str("idle"),
            UserState::Single(ty) => write!(f, "{ty:?}"),
            UserState::Multi { class, stage } => write!(f, "{}:{stage}", class.label()),
        }
    }
}

impl UserState {
    /// Subchannels the user holds.
    pub fn occupied_subchannels(self, cfg: &ModelConfig, sched: &WithdrawalSchedule) -> u32 {
        match self {
            UserState::Idle => 0,
            UserState::Single(ty) => cfg.width(ty),
            UserState::Multi { class, stage } => {
                cfg.width(class.background()) - sched.withdrawn(class, stage)
                    + cfg.width(class.foreground())
            }
        }
    }

    /// Every user state the schedule admits, idle first.
    pub fn all(sched: &WithdrawalSchedule) -> Vec<UserState> {
        let mut out = vec![
            UserState::Idle,
            UserState::Single(ConnType::T1),
            UserState::Single(ConnType::T2),
        ];
        for class in MultiClass::ALL {
            for stage in 0..=sched.stages(class) {
                out.push(UserState::Multi { class, stage });
            }
        }
        out
    }
}
