//! Cell-level CTMC over `(occupancy, substate)` and its steady-state metrics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ctmc::{self, GeneratorBuilder, SolveOptions, SparseGenerator, SteadyStateDistribution};
use crate::model::{
    enumerate_states_with_limit, handoff_outcome, new_call_admissible, ConnType, HandoffOutcome, ModelConfig,
    MultiClass, SystemState, UserState, WithdrawalSchedule,
};
use crate::user_chain::{self, HandoffRates, UserDistribution};
use crate::Error;

/// Event category of a cell transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    NewCall,
    HandoffArrival,
    HandoffDeparture,
    Termination,
    /// Foreground end whose background could not get its subchannels back.
    RecoveryDrop,
}

/// Connection-level moves out of `s` (stair moves excluded).
pub fn event_moves(
    s: &SystemState,
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
    rates: &HandoffRates,
) -> Vec<(SystemState, f64, EventKind)> {
    let mut out = Vec::new();
    let lam = cfg.call_rate;
    let load = s.cell_load(cfg, sched);
    let busy = s.busy_users();
    let idle = s.idle_users(cfg).expect("enumerated states respect the population");

    // new calls; a blocked call leaves the state unchanged
    for new in ConnType::ALL {
        if !new_call_admissible(s, new, cfg, sched) {
            continue;
        }
        let p = cfg.share(new);
        if idle > 0 {
            out.push((s.moved(None, Some(UserState::Single(new))), f64::from(idle) * lam * p, EventKind::NewCall));
        }
        for existing in ConnType::ALL {
            let n = s.single(existing);
            if n > 0 {
                let class = MultiClass::from_pair(existing, new);
                let next = s.moved(Some(UserState::Single(existing)), Some(UserState::Multi { class, stage: 0 }));
                out.push((next, f64::from(n) * lam * p, EventKind::NewCall));
            }
        }
    }

    // handoff arrivals; none when every user is already busy
    if busy < cfg.users {
        for (u, rate) in rates.iter() {
            if rate == 0.0 {
                continue;
            }
            let joined = match handoff_outcome(s, u, cfg, sched) {
                HandoffOutcome::AcceptFull => u,
                HandoffOutcome::AcceptFrozen => match u {
                    UserState::Multi { class, .. } => UserState::Multi { class, stage: sched.stages(class) },
                    _ => unreachable!("single-connection users cannot be frozen"),
                },
                HandoffOutcome::Drop => continue,
            };
            out.push((s.moved(None, Some(joined)), rate, EventKind::HandoffArrival));
        }
    }

    for (u, n) in s.occupied() {
        let n = f64::from(n);
        out.push((s.moved(Some(u), None), n * cfg.residence_rate, EventKind::HandoffDeparture));

        match u {
            UserState::Idle => unreachable!(),
            UserState::Single(ty) => {
                out.push((s.moved(Some(u), None), n * cfg.end_rate(ty), EventKind::Termination));
            }
            UserState::Multi { class, stage } => {
                let withdrawn = sched.withdrawn(class, stage);
                let bg = class.background();
                let fg = class.foreground();
                let cut = f64::from(withdrawn) / f64::from(cfg.width(bg));
                match class {
                    MultiClass::I | MultiClass::IV => {
                        let mu = cfg.end_rate(fg);
                        let rate = n * (mu * (1.0 - cut) + mu);
                        out.push((s.moved(Some(u), Some(UserState::Single(fg))), rate, EventKind::Termination));
                    }
                    MultiClass::II | MultiClass::III => {
                        // background ends: the foreground stays
                        let rate = n * cfg.end_rate(bg) * (1.0 - cut);
                        out.push((s.moved(Some(u), Some(UserState::Single(fg))), rate, EventKind::Termination));
                        // foreground ends: the background must win back its withdrawn subchannels
                        let rate = n * cfg.end_rate(fg);
                        let after = i64::from(load) + i64::from(withdrawn) - i64::from(cfg.width(fg));
                        if after <= i64::from(cfg.channels) {
                            out.push((s.moved(Some(u), Some(UserState::Single(bg))), rate, EventKind::Termination));
                        } else {
                            out.push((s.moved(Some(u), None), rate, EventKind::RecoveryDrop));
                        }
                    }
                }
            }
        }
    }
    out.retain(|(_, rate, _)| *rate > 0.0);
    out
}

#[derive(Debug, Clone)]
pub struct SystemChain {
    /// Macro states in canonical order; row of `(s, m)` is `index(s) * M + m - 1`.
    pub states: Vec<SystemState>,
    pub stairs: usize,
    pub generator: SparseGenerator,
    index: HashMap<SystemState, usize>,
}

impl SystemChain {
    pub fn dimension(&self) -> usize {
        self.generator.dimension()
    }

    pub fn macro_index(&self, s: &SystemState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Generator row of `s` in substate `m` (1-based).
    pub fn row(&self, s: &SystemState, m: usize) -> Option<usize> {
        if !(1..=self.stairs).contains(&m) {
            return None;
        }
        self.macro_index(s).map(|i| i * self.stairs + m - 1)
    }

    /// Stationary probability of each macro state (substates summed).
    pub fn macro_distribution(&self, pi: &SteadyStateDistribution) -> Vec<f64> {
        pi.probabilities.chunks(self.stairs).map(|c| c.iter().sum()).collect()
    }
}

pub fn build_system_chain(
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
    rates: &HandoffRates,
    state_limit: usize,
) -> Result<SystemChain, Error> {
    let states = enumerate_states_with_limit(cfg, sched, state_limit)?;
    let index: HashMap<SystemState, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let stairs = cfg.stairs as usize;
    let stair_rate = cfg.stair_rate();

    let mut b = GeneratorBuilder::new(states.len() * stairs);
    for (k, s) in states.iter().enumerate() {
        let moves: Vec<(usize, f64)> = event_moves(s, cfg, sched, rates)
            .into_iter()
            .map(|(t, rate, _)| {
                let j = *index.get(&t).unwrap_or_else(|| panic!("transition from {s} leaves the state space: {t}"));
                (j, rate)
            })
            .collect();
        let converted = index[&s.convert()];
        for m in 0..stairs {
            let row = k * stairs + m;
            for &(j, rate) in &moves {
                b.add_transition(row, j * stairs + m, rate)?;
            }
            let next = if m + 1 < stairs { row + 1 } else { converted * stairs };
            if next != row {
                b.add_transition(row, next, stair_rate)?;
            }
        }
    }
    Ok(SystemChain { states, stairs, generator: b.finalize(), index })
}

pub fn solve_system(chain: &SystemChain, opts: &SolveOptions) -> Result<SteadyStateDistribution, Error> {
    // the empty cell is first in canonical order
    Ok(ctmc::solve(&chain.generator, 0, opts)?)
}

/// Handoff arrival families, in report order.
pub const HANDOFF_FAMILIES: [&str; 6] = ["single_t1", "single_t2", "class_i", "class_ii", "class_iii", "class_iv"];

pub fn handoff_family(u: UserState) -> usize {
    match u {
        UserState::Idle => panic!("idle users do not hand off"),
        UserState::Single(ty) => ty.index(),
        UserState::Multi { class, .. } => 2 + class.index(),
    }
}

/// Time-average population of each user set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanCounts {
    pub idle: f64,
    pub single_t1: f64,
    pub single_t2: f64,
    /// Two-connection users per class I..IV, all stages.
    pub multi: [f64; 4],
}

/// Steady-state performance figures. Ratios with a zero denominator are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Blocked share of all new-call attempts, T1 and T2.
    pub blocking: [Option<f64>; 2],
    /// Blocked share of new calls started by idle users, T1 and T2.
    pub idle_blocking: [Option<f64>; 2],
    pub handoff_dropping: Option<f64>,
    /// Dropping per arrival family, see [`HANDOFF_FAMILIES`].
    pub family_dropping: [Option<f64>; 6],
    /// Share of handoff arrivals admitted with a frozen background connection.
    pub handoff_freeze: Option<f64>,
    /// Failed share of recoveries after a class II foreground connection ends.
    pub recovery_dropping: Option<f64>,
    /// Handoff arrivals turned away because all users are busy (1/s).
    pub cap_rejection_rate: f64,
    /// Mean load over C.
    pub utilization: Option<f64>,
    pub mean_counts: MeanCounts,
}

/// Names of the headline metrics, the order used by [`MetricsReport::headline`].
pub const HEADLINE_METRICS: [&str; 9] = [
    "blocking_t1",
    "blocking_t2",
    "idle_blocking_t1",
    "idle_blocking_t2",
    "handoff_dropping",
    "handoff_freeze",
    "recovery_dropping",
    "cap_rejection_rate",
    "utilization",
];

impl MetricsReport {
    pub fn headline(&self) -> Vec<(&'static str, Option<f64>)> {
        let values = [
            self.blocking[0],
            self.blocking[1],
            self.idle_blocking[0],
            self.idle_blocking[1],
            self.handoff_dropping,
            self.handoff_freeze,
            self.recovery_dropping,
            Some(self.cap_rejection_rate),
            self.utilization,
        ];
        HEADLINE_METRICS.into_iter().zip(values).collect()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        if let Some(i) = HANDOFF_FAMILIES.iter().position(|f| name.strip_prefix("dropping_") == Some(f)) {
            return self.family_dropping[i];
        }
        self.headline().into_iter().find(|(n, _)| *n == name).and_then(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsOptions {
    /// Count population-cap rejections as drops.
    pub include_cap_in_dropping: bool,
}

pub(crate) fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| (num / den).clamp(0.0, 1.0))
}

/// Rate-weighted metrics under the macro distribution `macro_pi`.
pub fn compute_metrics(
    chain: &SystemChain,
    macro_pi: &[f64],
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
    rates: &HandoffRates,
    opts: MetricsOptions,
) -> MetricsReport {
    let lam = cfg.call_rate;
    let mut offered = [0.0; 2];
    let mut blocked = [0.0; 2];
    let mut idle_offered = [0.0; 2];
    let mut idle_blocked = [0.0; 2];
    let mut handoff_offered = [0.0; 6];
    let mut handoff_dropped = [0.0; 6];
    let mut frozen = 0.0;
    let mut cap = 0.0;
    let mut recovery_attempts = 0.0;
    let mut recovery_failures = 0.0;
    let mut load_sum = 0.0;
    let mut counts = MeanCounts::default();

    for (s, &p) in chain.states.iter().zip(macro_pi) {
        if p == 0.0 {
            continue;
        }
        let load = s.cell_load(cfg, sched);
        let idle = f64::from(s.idle_users(cfg).expect("enumerated states respect the population"));
        let sources = idle + f64::from(s.n1 + s.n2);
        for ty in ConnType::ALL {
            let attempt = sources * lam * cfg.share(ty);
            let fresh = idle * lam * cfg.share(ty);
            offered[ty.index()] += p * attempt;
            idle_offered[ty.index()] += p * fresh;
            if !new_call_admissible(s, ty, cfg, sched) {
                blocked[ty.index()] += p * attempt;
                idle_blocked[ty.index()] += p * fresh;
            }
        }

        let capped = s.busy_users() >= cfg.users;
        for (u, rate) in rates.iter() {
            if rate == 0.0 {
                continue;
            }
            if capped {
                cap += p * rate;
                continue;
            }
            let f = handoff_family(u);
            handoff_offered[f] += p * rate;
            match handoff_outcome(s, u, cfg, sched) {
                HandoffOutcome::AcceptFull => {}
                HandoffOutcome::AcceptFrozen => frozen += p * rate,
                HandoffOutcome::Drop => handoff_dropped[f] += p * rate,
            }
        }

        for (stage, &n) in s.class(MultiClass::II).iter().enumerate() {
            if n == 0 {
                continue;
            }
            let rate = f64::from(n) * cfg.t2_end_rate;
            recovery_attempts += p * rate;
            let after = load + sched.withdrawn(MultiClass::II, stage) - cfg.t2_subchannels;
            if after > cfg.channels {
                recovery_failures += p * rate;
            }
        }

        load_sum += p * f64::from(load);
        counts.idle += p * idle;
        counts.single_t1 += p * f64::from(s.n1);
        counts.single_t2 += p * f64::from(s.n2);
        for class in MultiClass::ALL {
            counts.multi[class.index()] += p * f64::from(s.class(class).iter().sum::<u32>());
        }
    }

    let mut drop_total: f64 = handoff_dropped.iter().sum();
    let mut offered_total: f64 = handoff_offered.iter().sum();
    if opts.include_cap_in_dropping {
        drop_total += cap;
        offered_total += cap;
    }
    MetricsReport {
        blocking: [0, 1].map(|k| ratio(blocked[k], offered[k])),
        idle_blocking: [0, 1].map(|k| ratio(idle_blocked[k], idle_offered[k])),
        handoff_dropping: ratio(drop_total, offered_total),
        family_dropping: std::array::from_fn(|f| ratio(handoff_dropped[f], handoff_offered[f])),
        handoff_freeze: ratio(frozen, handoff_offered.iter().sum()),
        recovery_dropping: ratio(recovery_failures, recovery_attempts),
        cap_rejection_rate: cap,
        utilization: (cfg.channels > 0).then(|| load_sum / f64::from(cfg.channels)),
        mean_counts: counts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub solver: SolveOptions,
    pub metrics: MetricsOptions,
    pub state_limit: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            solver: SolveOptions::default(),
            metrics: MetricsOptions::default(),
            state_limit: crate::model::DEFAULT_STATE_LIMIT,
        }
    }
}

/// Everything produced by one analytic run.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub user: UserDistribution,
    pub rates: HandoffRates,
    pub chain: SystemChain,
    pub distribution: SteadyStateDistribution,
    pub metrics: MetricsReport,
}

/// User chain, handoff rates, cell chain, steady state and metrics in one go.
pub fn analyze(cfg: &ModelConfig, sched: &WithdrawalSchedule, opts: &AnalysisOptions) -> Result<Analysis, Error> {
    cfg.validate()?;
    let (user, rates) = user_chain::solve_user_chain(cfg, sched, &opts.solver)?;
    let chain = build_system_chain(cfg, sched, &rates, opts.state_limit)?;
    let distribution = solve_system(&chain, &opts.solver)?;
    let macro_pi = chain.macro_distribution(&distribution);
    let metrics = compute_metrics(&chain, &macro_pi, cfg, sched, &rates, opts.metrics);
    Ok(Analysis { user, rates, chain, distribution, metrics })
}
