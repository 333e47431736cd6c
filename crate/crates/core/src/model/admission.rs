use serde::{Deserialize, Serialize};

use super::{ConnType, ModelConfig, SystemState, UserState, WithdrawalSchedule};

/// Result of offering a handoff user to the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HandoffOutcome {
    /// Every connection admitted as it arrived.
    AcceptFull,
    /// Only the foreground connection fits; the user joins the frozen stage.
    AcceptFrozen,
    Drop,
}

/// A new call of type `ty` fits under the handoff reserve (inclusive).
pub fn new_call_admissible(
    s: &SystemState,
    ty: ConnType,
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
) -> bool {
    s.cell_load(cfg, sched) + cfg.width(ty) <= cfg.new_call_limit()
}

/// Admission decision for a handoff user arriving in state `arriving`.
///
/// Panics if `arriving` is `Idle`: idle users carry no connection to hand off.
pub fn handoff_outcome(
    s: &SystemState,
    arriving: UserState,
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
) -> HandoffOutcome {
    outcome_at_load(s.cell_load(cfg, sched), arriving, cfg, sched)
}

pub(crate) fn outcome_at_load(
    load: u32,
    arriving: UserState,
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
) -> HandoffOutcome {
    let limit = cfg.handoff_limit();
    match arriving {
        UserState::Idle => panic!("an idle user cannot hand off"),
        UserState::Single(_) => {
            if load + arriving.occupied_subchannels(cfg, sched) <= limit {
                HandoffOutcome::AcceptFull
            } else {
                HandoffOutcome::Drop
            }
        }
        UserState::Multi { class, stage } => {
            if load + arriving.occupied_subchannels(cfg, sched) <= limit {
                HandoffOutcome::AcceptFull
            } else if stage < sched.stages(class) && load + cfg.width(class.foreground()) <= limit {
                HandoffOutcome::AcceptFrozen
            } else {
                HandoffOutcome::Drop
            }
        }
    }
}
