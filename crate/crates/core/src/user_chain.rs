//! Per-user Markov chain with stair substates, and the handoff inflow rates it
//! implies for the cell.
//!
//! The chain follows one user in isolation (cell capacity plays no role). Each
//! user state is split into `M` substates walked at rate `M / tau`; leaving the
//! last substate starts a new period, which advances a two-connection user to
//! its next withdrawal stage. Connection events keep the substate index.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ctmc::{self, CtmcError, GeneratorBuilder, SolveOptions, SparseGenerator, SteadyStateDistribution};
use crate::model::{ConnType, ModelConfig, MultiClass, UserState, WithdrawalSchedule};

#[derive(Debug, Clone)]
pub struct UserChain {
    /// Macro user states, idle first; row of `(u, m)` is `index(u) * M + m - 1`.
    pub user_states: Vec<UserState>,
    pub stairs: usize,
    pub generator: SparseGenerator,
    index: HashMap<UserState, usize>,
}

impl UserChain {
    pub fn dimension(&self) -> usize {
        self.generator.dimension()
    }

    /// Generator row of user state `u` in substate `m` (1-based).
    pub fn row(&self, u: UserState, m: usize) -> Option<usize> {
        if !(1..=self.stairs).contains(&m) {
            return None;
        }
        self.index.get(&u).map(|i| i * self.stairs + m - 1)
    }

    /// `(state, substate)` of a generator row.
    pub fn state_of(&self, row: usize) -> (UserState, usize) {
        (self.user_states[row / self.stairs], row % self.stairs + 1)
    }
}

/// Connection-level moves out of `u`, as `(target, rate)`; stair moves excluded.
pub fn event_moves(u: UserState, cfg: &ModelConfig, sched: &WithdrawalSchedule) -> Vec<(UserState, f64)> {
    let lam = cfg.call_rate;
    match u {
        UserState::Idle => ConnType::ALL
            .iter()
            .map(|&ty| (UserState::Single(ty), lam * cfg.share(ty)))
            .collect(),
        UserState::Single(existing) => {
            let mut out: Vec<(UserState, f64)> = ConnType::ALL
                .iter()
                .map(|&new| {
                    let class = MultiClass::from_pair(existing, new);
                    (UserState::Multi { class, stage: 0 }, lam * cfg.share(new))
                })
                .collect();
            out.push((UserState::Idle, cfg.end_rate(existing)));
            out
        }
        UserState::Multi { class, stage } => {
            let bg = class.background();
            let fg = class.foreground();
            // fraction of the background connection withdrawn so far
            let cut = f64::from(sched.withdrawn(class, stage)) / f64::from(cfg.width(bg));
            if bg == fg {
                // either connection ending leaves a single connection of the same type
                vec![(UserState::Single(fg), cfg.end_rate(fg) * (2.0 - cut))]
            } else {
                vec![
                    (UserState::Single(bg), cfg.end_rate(fg)),
                    (UserState::Single(fg), cfg.end_rate(bg) * (1.0 - cut)),
                ]
            }
        }
    }
}

/// State entered when a period ends in `u`.
pub fn next_period_state(u: UserState, sched: &WithdrawalSchedule) -> UserState {
    match u {
        UserState::Multi { class, stage } if stage < sched.stages(class) => {
            UserState::Multi { class, stage: stage + 1 }
        }
        other => other,
    }
}

pub fn build_user_chain(cfg: &ModelConfig, sched: &WithdrawalSchedule) -> UserChain {
    let user_states = UserState::all(sched);
    let index: HashMap<UserState, usize> = user_states.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let stairs = cfg.stairs as usize;
    let stair_rate = cfg.stair_rate();
    let row = |u: UserState, m: usize| index[&u] * stairs + m - 1;

    let mut b = GeneratorBuilder::new(user_states.len() * stairs);
    let mut add = |from: usize, to: usize, rate: f64| {
        // M = 1 turns the intra-state wrap into a self-loop, which carries no information
        if from != to {
            b.add_transition(from, to, rate).expect("user chain indices are in range");
        }
    };
    for &u in &user_states {
        let moves = event_moves(u, cfg, sched);
        for m in 1..=stairs {
            for &(target, rate) in &moves {
                add(row(u, m), row(target, m), rate);
            }
            if m < stairs {
                add(row(u, m), row(u, m + 1), stair_rate);
            } else {
                add(row(u, m), row(next_period_state(u, sched), 1), stair_rate);
            }
        }
    }
    UserChain { user_states, stairs, generator: b.finalize(), index }
}

/// Stationary probability of each macro user state (substates summed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDistribution {
    pub states: Vec<UserState>,
    pub probabilities: Vec<f64>,
    pub solver: SteadyStateDistribution,
}

impl UserDistribution {
    pub fn get(&self, u: UserState) -> f64 {
        self.states
            .iter()
            .position(|&s| s == u)
            .map_or(0.0, |i| self.probabilities[i])
    }
}

pub fn user_steady_state(chain: &UserChain, opts: &SolveOptions) -> Result<UserDistribution, CtmcError> {
    let root = chain.row(UserState::Idle, 1).expect("idle state exists");
    let solved = ctmc::solve(&chain.generator, root, opts)?;
    let probabilities = chain
        .user_states
        .iter()
        .enumerate()
        .map(|(i, _)| solved.probabilities[i * chain.stairs..(i + 1) * chain.stairs].iter().sum())
        .collect();
    Ok(UserDistribution { states: chain.user_states.clone(), probabilities, solver: solved })
}

/// Handoff inflow per arriving user state, `K * eta * pi(u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoffRates {
    /// Single-connection arrivals, indexed T1, T2.
    pub single: [f64; 2],
    /// Two-connection arrivals per class (I..IV) and stage.
    pub multi: [Vec<f64>; 4],
}

impl HandoffRates {
    pub fn zero(sched: &WithdrawalSchedule) -> Self {
        Self { single: [0.0; 2], multi: MultiClass::ALL.map(|c| vec![0.0; sched.stages(c) + 1]) }
    }

    pub fn rate(&self, u: UserState) -> f64 {
        match u {
            UserState::Idle => 0.0,
            UserState::Single(ty) => self.single[ty.index()],
            UserState::Multi { class, stage } => self.multi[class.index()][stage],
        }
    }

    /// Every arriving state with its rate, zero rates included.
    pub fn iter(&self) -> impl Iterator<Item = (UserState, f64)> + '_ {
        let singles = ConnType::ALL.into_iter().map(|ty| (UserState::Single(ty), self.single[ty.index()]));
        let multis = MultiClass::ALL.into_iter().flat_map(move |class| {
            self.multi[class.index()]
                .iter()
                .enumerate()
                .map(move |(stage, &r)| (UserState::Multi { class, stage }, r))
        });
        singles.chain(multis)
    }

    pub fn total(&self) -> f64 {
        self.iter().map(|(_, r)| r).sum()
    }
}

pub fn handoff_rates(cfg: &ModelConfig, sched: &WithdrawalSchedule, pi: &UserDistribution) -> HandoffRates {
    let scale = f64::from(cfg.users) * cfg.residence_rate;
    let mut rates = HandoffRates::zero(sched);
    rates.single = ConnType::ALL.map(|ty| scale * pi.get(UserState::Single(ty)));
    for class in MultiClass::ALL {
        for (stage, r) in rates.multi[class.index()].iter_mut().enumerate() {
            *r = scale * pi.get(UserState::Multi { class, stage });
        }
    }
    rates
}

/// Builds and solves the user chain, returning its distribution and rates.
pub fn solve_user_chain(
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
    opts: &SolveOptions,
) -> Result<(UserDistribution, HandoffRates), CtmcError> {
    let chain = build_user_chain(cfg, sched);
    let pi = user_steady_state(&chain, opts)?;
    let rates = handoff_rates(cfg, sched, &pi);
    Ok((pi, rates))
}
