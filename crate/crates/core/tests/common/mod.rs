#![allow(dead_code)]

pub mod oracle;

use oracle::{Params, U};
use tfrc_core::model::{ConnType, ModelConfig, MultiClass, SystemState, UserState, WithdrawalSchedule};
use tfrc_core::system_chain::{analyze, AnalysisOptions, MetricsReport};
use tfrc_core::user_chain::build_user_chain;

pub fn reference(stairs: u32) -> ModelConfig {
    ModelConfig { stairs, ..ModelConfig::default() }
}

pub struct Fixture {
    pub name: &'static str,
    pub cfg: ModelConfig,
    pub sched: WithdrawalSchedule,
    pub params: Params,
}

fn fixture(name: &'static str, cfg: ModelConfig) -> Fixture {
    let sched = WithdrawalSchedule::from_config(&cfg);
    let params = Params::from_config(&cfg);
    Fixture { name, cfg, sched, params }
}

/// Oracle fixtures, all at most 5,000 stair states.
pub fn fixtures() -> Vec<Fixture> {
    let base = ModelConfig::default();
    let mut out = vec![
        fixture("reference M=1", reference(1)),
        fixture("reference M=2", reference(2)),
        fixture("reference M=4", reference(4)),
        fixture(
            "small cell",
            ModelConfig { channels: 6, recovery_reserve: 1, handoff_reserve: 2, users: 2, stairs: 3, ..base.clone() },
        ),
        fixture(
            "wide T1, step 2",
            ModelConfig {
                channels: 7,
                t1_subchannels: 3,
                withdraw_step: 2,
                users: 3,
                stairs: 2,
                t1_share: 0.7,
                t2_share: 0.3,
                ..base.clone()
            },
        ),
        fixture(
            "unequal rates, long period",
            ModelConfig {
                t1_end_rate: 1.7,
                t2_end_rate: 0.6,
                period: 2.5,
                residence_rate: 0.9,
                call_rate: 1.3,
                users: 3,
                stairs: 3,
                ..base.clone()
            },
        ),
        fixture("single user", ModelConfig { users: 1, stairs: 4, ..base.clone() }),
        fixture(
            "no guard channels",
            ModelConfig { recovery_reserve: 0, handoff_reserve: 0, channels: 5, users: 3, stairs: 2, ..base.clone() },
        ),
        fixture("no mobility", ModelConfig { residence_rate: 0.0, users: 3, stairs: 3, ..base.clone() }),
        fixture(
            "tight recovery",
            ModelConfig {
                channels: 5,
                recovery_reserve: 0,
                handoff_reserve: 1,
                t1_subchannels: 3,
                t2_subchannels: 1,
                call_rate: 2.0,
                t1_share: 0.3,
                t2_share: 0.7,
                users: 3,
                stairs: 2,
                ..base.clone()
            },
        ),
    ];
    // explicit schedule lists
    let cfg = ModelConfig { t1_subchannels: 3, channels: 8, users: 3, stairs: 2, ..base };
    let lists = [vec![0, 2, 3], vec![0, 1, 3], vec![0, 1], vec![0, 1]];
    out.push(Fixture {
        name: "override schedule",
        sched: WithdrawalSchedule::from_lists(&cfg, lists.clone()).unwrap(),
        params: Params::with_lists(&cfg, lists),
        cfg,
    });
    out
}

pub fn to_user_state(u: U) -> UserState {
    match u {
        U::Idle => UserState::Idle,
        U::S(k) => UserState::Single(ConnType::ALL[k]),
        U::M(j, i) => UserState::Multi { class: MultiClass::ALL[j], stage: i },
    }
}

pub fn flat(s: &SystemState) -> Vec<u32> {
    let mut v = vec![s.n1, s.n2];
    for counts in &s.multi {
        v.extend_from_slice(counts);
    }
    v
}

/// Largest deviations between the production pipeline and the oracle.
#[derive(Debug, Default)]
pub struct Deviation {
    pub states: usize,
    pub user_stair: f64,
    pub user_macro: f64,
    pub rates: f64,
    pub system_stair: f64,
    pub metrics: f64,
    pub same_state_set: bool,
}

pub fn metric_pairs(prod: &MetricsReport, o: &oracle::OracleMetrics) -> Vec<(Option<f64>, Option<f64>)> {
    let mut v = vec![
        (prod.blocking[0], o.blocking[0]),
        (prod.blocking[1], o.blocking[1]),
        (prod.idle_blocking[0], o.idle_blocking[0]),
        (prod.idle_blocking[1], o.idle_blocking[1]),
        (prod.handoff_dropping, o.handoff_dropping),
        (prod.handoff_freeze, o.handoff_freeze),
        (prod.recovery_dropping, o.recovery_dropping),
        (Some(prod.cap_rejection_rate), Some(o.cap_rejection_rate)),
        (prod.utilization, o.utilization),
    ];
    v.extend(prod.family_dropping.iter().copied().zip(o.family_dropping.iter().copied()));
    v
}

fn gap(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    }
}

pub fn compare(f: &Fixture) -> Deviation {
    let a = analyze(&f.cfg, &f.sched, &AnalysisOptions::default()).expect("production pipeline");
    let uo = oracle::user_oracle(&f.params);
    let so = oracle::system_oracle(&f.params, &uo.rates);
    let big_m = f.cfg.stairs as usize;
    let mut d = Deviation { states: a.chain.dimension(), ..Deviation::default() };

    let uc = build_user_chain(&f.cfg, &f.sched);
    for (i, &u) in uo.states.iter().enumerate() {
        let us = to_user_state(u);
        d.user_macro = d.user_macro.max((a.user.get(us) - uo.pi[&u]).abs());
        for m in 1..=big_m {
            let row = uc.row(us, m).expect("user state present");
            d.user_stair = d.user_stair.max((a.user.solver.probabilities[row] - uo.stair_pi[i * big_m + m - 1]).abs());
        }
    }
    for &(u, r) in &uo.rates {
        d.rates = d.rates.max((a.rates.rate(to_user_state(u)) - r).abs());
    }

    let prod_set: Vec<Vec<u32>> = a.chain.states.iter().map(flat).collect();
    d.same_state_set = {
        let mut sorted = prod_set.clone();
        sorted.sort();
        sorted == so.states
    };
    for (s, key) in a.chain.states.iter().zip(&prod_set) {
        let oi = so.index[key];
        for m in 1..=big_m {
            let row = a.chain.row(s, m).expect("state present");
            let err = (a.distribution.probabilities[row] - so.stair_pi[oi * big_m + m - 1]).abs();
            d.system_stair = d.system_stair.max(err);
        }
    }
    for (x, y) in metric_pairs(&a.metrics, &so.metrics) {
        d.metrics = d.metrics.max(gap(x, y));
    }
    d
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Engset stationary distribution of busy servers: `pi_j ∝ C(K, j) a^j`, `j <= servers`.
pub fn engset_distribution(sources: u32, servers: u32, a: f64) -> Vec<f64> {
    let top = servers.min(sources);
    let w: Vec<f64> = (0..=top).map(|j| binomial(sources, j) * a.powi(j as i32)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Engset call congestion: an arriving request sees all servers busy, which
/// is the time congestion of the same system with one source fewer.
pub fn engset_call_congestion(sources: u32, servers: u32, a: f64) -> f64 {
    if servers >= sources {
        return 0.0;
    }
    let pi = engset_distribution(sources - 1, servers, a);
    pi[servers as usize]
}
