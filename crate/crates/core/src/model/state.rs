use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ConnType, ModelConfig, ModelError, MultiClass, UserState, WithdrawalSchedule};

/// Cap on `macro states x stairs` before enumeration gives up.
pub const DEFAULT_STATE_LIMIT: usize = 5_000_000;

/// Occupancy of the cell: how many users sit in each user set.
///
/// The derived ordering is lexicographic over `(n1, n2, multi)`, which is the
/// canonical enumeration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SystemState {
    /// Users with a single T1 connection.
    pub n1: u32,
    /// Users with a single T2 connection.
    pub n2: u32,
    /// Two-connection users per class (I..IV) and withdrawal stage.
    pub multi: [Vec<u32>; 4],
}

impl SystemState {
    pub fn empty(sched: &WithdrawalSchedule) -> Self {
        Self {
            n1: 0,
            n2: 0,
            multi: MultiClass::ALL.map(|c| vec![0; sched.stages(c) + 1]),
        }
    }

    pub fn single(&self, ty: ConnType) -> u32 {
        match ty {
            ConnType::T1 => self.n1,
            ConnType::T2 => self.n2,
        }
    }

    pub fn class(&self, class: MultiClass) -> &[u32] {
        &self.multi[class.index()]
    }

    /// Number of users in state `u`; for `Idle` this is not defined here, see
    /// [`SystemState::idle_users`].
    pub fn count(&self, u: UserState) -> u32 {
        match u {
            UserState::Idle => 0,
            UserState::Single(ty) => self.single(ty),
            UserState::Multi { class, stage } => self.multi[class.index()][stage],
        }
    }

    /// Copy with one more user in `u` (and one fewer in `from`, if given).
    /// Idle is implicit and never stored.
    pub fn moved(&self, from: Option<UserState>, to: Option<UserState>) -> SystemState {
        let mut next = self.clone();
        if let Some(u) = from {
            *next.slot_mut(u) -= 1;
        }
        if let Some(u) = to {
            *next.slot_mut(u) += 1;
        }
        next
    }

    fn slot_mut(&mut self, u: UserState) -> &mut u32 {
        match u {
            UserState::Idle => panic!("idle users are not stored in the state vector"),
            UserState::Single(ConnType::T1) => &mut self.n1,
            UserState::Single(ConnType::T2) => &mut self.n2,
            UserState::Multi { class, stage } => &mut self.multi[class.index()][stage],
        }
    }

    pub fn busy_users(&self) -> u32 {
        self.n1 + self.n2 + self.multi.iter().flatten().sum::<u32>()
    }

    /// Subchannels in use.
    pub fn cell_load(&self, cfg: &ModelConfig, sched: &WithdrawalSchedule) -> u32 {
        let mut load = self.n1 * cfg.t1_subchannels + self.n2 * cfg.t2_subchannels;
        for class in MultiClass::ALL {
            for (stage, &n) in self.multi[class.index()].iter().enumerate() {
                load += n * UserState::Multi { class, stage }.occupied_subchannels(cfg, sched);
            }
        }
        load
    }

    pub fn idle_users(&self, cfg: &ModelConfig) -> Result<u32, ModelError> {
        let busy = self.busy_users();
        cfg.users
            .checked_sub(busy)
            .ok_or(ModelError::InfeasibleState { busy, users: cfg.users })
    }

    /// One conversion round: every two-connection user advances one stage, the
    /// frozen stage absorbs.
    pub fn convert(&self) -> SystemState {
        let multi = self.multi.clone().map(|counts| {
            let last = counts.len() - 1;
            let mut next = vec![0; counts.len()];
            for (stage, &n) in counts.iter().enumerate() {
                next[(stage + 1).min(last)] += n;
            }
            next
        });
        SystemState { n1: self.n1, n2: self.n2, multi }
    }

    /// Iterator over every stored (non-idle) user state with its count.
    pub fn occupied(&self) -> impl Iterator<Item = (UserState, u32)> + '_ {
        let singles = ConnType::ALL.into_iter().map(|ty| (UserState::Single(ty), self.single(ty)));
        let multis = MultiClass::ALL.into_iter().flat_map(move |class| {
            self.multi[class.index()]
                .iter()
                .enumerate()
                .map(move |(stage, &n)| (UserState::Multi { class, stage }, n))
        });
        singles.chain(multis).filter(|(_, n)| *n > 0)
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n1={} n2={}", self.n1, self.n2)?;
        for class in MultiClass::ALL {
            write!(f, " {}=", class.label())?;
            let counts: Vec<String> = self.multi[class.index()].iter().map(u32::to_string).collect();
            write!(f, "[{}]", counts.join(","))?;
        }
        Ok(())
    }
}

/// All states with `busy_users <= K` and `cell_load <= C`, in canonical order.
pub fn enumerate_states(cfg: &ModelConfig, sched: &WithdrawalSchedule) -> Result<Vec<SystemState>, ModelError> {
    enumerate_states_with_limit(cfg, sched, DEFAULT_STATE_LIMIT)
}

/// As [`enumerate_states`], failing once `states * stairs` would exceed `limit`.
pub fn enumerate_states_with_limit(
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
    limit: usize,
) -> Result<Vec<SystemState>, ModelError> {
    // Slot weights in field order: n1, n2, then each class/stage.
    let mut weights = vec![cfg.t1_subchannels, cfg.t2_subchannels];
    for class in MultiClass::ALL {
        for stage in 0..=sched.stages(class) {
            weights.push(UserState::Multi { class, stage }.occupied_subchannels(cfg, sched));
        }
    }
    let macro_limit = limit / cfg.stairs.max(1) as usize;

    let mut out = Vec::new();
    let mut counts = vec![0u32; weights.len()];
    fill(&weights, 0, cfg.users, cfg.channels, &mut counts, &mut |c| {
        if out.len() >= macro_limit {
            return Err(ModelError::CapacityExplosion { limit });
        }
        out.push(unflatten(c, sched));
        Ok(())
    })?;
    Ok(out)
}

fn fill(
    weights: &[u32],
    slot: usize,
    users_left: u32,
    load_left: u32,
    counts: &mut [u32],
    emit: &mut impl FnMut(&[u32]) -> Result<(), ModelError>,
) -> Result<(), ModelError> {
    if slot == weights.len() {
        return emit(counts);
    }
    let w = weights[slot];
    let mut n = 0;
    loop {
        counts[slot] = n;
        fill(weights, slot + 1, users_left - n, load_left - n * w, counts, emit)?;
        if n == users_left || (n + 1) * w > load_left {
            break;
        }
        n += 1;
    }
    counts[slot] = 0;
    Ok(())
}

fn unflatten(flat: &[u32], sched: &WithdrawalSchedule) -> SystemState {
    let mut rest = &flat[2..];
    let multi = MultiClass::ALL.map(|class| {
        let (head, tail) = rest.split_at(sched.stages(class) + 1);
        rest = tail;
        head.to_vec()
    });
    SystemState { n1: flat[0], n2: flat[1], multi }
}
