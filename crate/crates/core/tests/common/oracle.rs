//! Dense reference model, written straight from the model description and kept
//! free of production code: its own state layout, enumeration, transition list,
//! LU solve and metrics. Only plain numbers cross the boundary.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use tfrc_core::model::ModelConfig;

/// Oracle view of a user: idle, single connection of type k, or class j at stage i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum U {
    Idle,
    S(usize),
    M(usize, usize),
}

pub struct Params {
    pub c: u32,
    pub c_r: u32,
    pub c_hr: u32,
    pub r: [u32; 2],
    pub lam: f64,
    pub p: [f64; 2],
    pub mu: [f64; 2],
    pub eta: f64,
    pub k: u32,
    pub tau: f64,
    pub stairs: usize,
    /// Withdrawn amounts per class, stages 0..=m_j.
    pub w: [Vec<u32>; 4],
}

// (background type, foreground type) for classes I..IV
const CLASS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

impl Params {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        let r = [cfg.t1_subchannels, cfg.t2_subchannels];
        let w = CLASS.map(|(bg, _)| {
            let width = r[bg];
            let mut list = vec![0];
            let mut i = 1;
            loop {
                let v = (i * cfg.withdraw_step).min(width);
                list.push(v);
                if v == width {
                    break list;
                }
                i += 1;
            }
        });
        Self::with_lists(cfg, w)
    }

    pub fn with_lists(cfg: &ModelConfig, w: [Vec<u32>; 4]) -> Self {
        Params {
            c: cfg.channels,
            c_r: cfg.recovery_reserve,
            c_hr: cfg.handoff_reserve,
            r: [cfg.t1_subchannels, cfg.t2_subchannels],
            lam: cfg.call_rate,
            p: [cfg.t1_share, cfg.t2_share],
            mu: [cfg.t1_end_rate, cfg.t2_end_rate],
            eta: cfg.residence_rate,
            k: cfg.users,
            tau: cfg.period,
            stairs: cfg.stairs as usize,
            w,
        }
    }

    fn m(&self, j: usize) -> usize {
        self.w[j].len() - 1
    }

    pub fn occupancy(&self, u: U) -> u32 {
        match u {
            U::Idle => 0,
            U::S(k) => self.r[k],
            U::M(j, i) => {
                let (bg, fg) = CLASS[j];
                self.r[bg] - self.w[j][i] + self.r[fg]
            }
        }
    }

    pub fn user_states(&self) -> Vec<U> {
        let mut out = vec![U::Idle, U::S(0), U::S(1)];
        for j in 0..4 {
            for i in 0..=self.m(j) {
                out.push(U::M(j, i));
            }
        }
        out
    }

    /// Slot of a non-idle user state in the flat count vector.
    pub fn slot(&self, u: U) -> usize {
        match u {
            U::Idle => panic!("idle is implicit"),
            U::S(k) => k,
            U::M(j, i) => 2 + (0..j).map(|x| self.m(x) + 1).sum::<usize>() + i,
        }
    }

    fn slots(&self) -> Vec<U> {
        self.user_states()[1..].to_vec()
    }
}

/// Solves `pi A = 0, sum = 1` densely, `q` given as (from, to, rate) triples.
fn dense_solve(n: usize, q: &[(usize, usize, f64)]) -> Vec<f64> {
    let mut a = DMatrix::<f64>::zeros(n, n);
    for &(from, to, rate) in q {
        assert_ne!(from, to);
        assert!(rate >= 0.0);
        a[(to, from)] += rate;
        a[(from, from)] -= rate;
    }
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).expect("oracle system is nonsingular");
    x.iter().copied().collect()
}

pub struct UserOracle {
    pub states: Vec<U>,
    /// Row `index(u) * M + (m - 1)`.
    pub stair_pi: Vec<f64>,
    pub pi: HashMap<U, f64>,
    pub rates: Vec<(U, f64)>,
}

pub fn user_oracle(p: &Params) -> UserOracle {
    let states = p.user_states();
    let big_m = p.stairs;
    let pos: HashMap<U, usize> = states.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let row = |u: U, m: usize| pos[&u] * big_m + m - 1;
    let [p1, p2] = p.p;
    let [mu1, mu2] = p.mu;
    let (r1, r2) = (f64::from(p.r[0]), f64::from(p.r[1]));
    let lam = p.lam;
    let mut q = Vec::new();
    for &u in &states {
        // Table II event rows
        let mut moves: Vec<(U, f64)> = Vec::new();
        match u {
            U::Idle => {
                moves.push((U::S(0), lam * p1));
                moves.push((U::S(1), lam * p2));
            }
            U::S(0) => {
                moves.push((U::M(0, 0), lam * p1));
                moves.push((U::M(1, 0), lam * p2));
                moves.push((U::Idle, mu1));
            }
            U::S(_) => {
                moves.push((U::M(2, 0), lam * p1));
                moves.push((U::M(3, 0), lam * p2));
                moves.push((U::Idle, mu2));
            }
            U::M(0, i) => moves.push((U::S(0), mu1 * (2.0 - f64::from(p.w[0][i]) / r1))),
            U::M(1, i) => {
                moves.push((U::S(0), mu2));
                moves.push((U::S(1), mu1 * (1.0 - f64::from(p.w[1][i]) / r1)));
            }
            U::M(2, i) => {
                moves.push((U::S(1), mu1));
                moves.push((U::S(0), mu2 * (1.0 - f64::from(p.w[2][i]) / r2)));
            }
            U::M(_, i) => moves.push((U::S(1), mu2 * (2.0 - f64::from(p.w[3][i]) / r2))),
        }
        for m in 1..=big_m {
            for &(v, rate) in &moves {
                if rate > 0.0 {
                    q.push((row(u, m), row(v, m), rate));
                }
            }
            let step = big_m as f64 / p.tau;
            let target = if m < big_m {
                row(u, m + 1)
            } else {
                match u {
                    U::M(j, i) if i < p.m(j) => row(U::M(j, i + 1), 1),
                    _ => row(u, 1),
                }
            };
            if target != row(u, m) {
                q.push((row(u, m), target, step));
            }
        }
    }
    let stair_pi = dense_solve(states.len() * big_m, &q);
    let pi: HashMap<U, f64> = states
        .iter()
        .map(|&u| (u, (1..=big_m).map(|m| stair_pi[row(u, m)]).sum()))
        .collect();
    let scale = f64::from(p.k) * p.eta;
    let rates = states[1..].iter().map(|&u| (u, scale * pi[&u])).collect();
    UserOracle { states, stair_pi, pi, rates }
}

#[derive(Debug, Clone, Default)]
pub struct OracleMetrics {
    pub blocking: [Option<f64>; 2],
    pub idle_blocking: [Option<f64>; 2],
    pub handoff_dropping: Option<f64>,
    pub family_dropping: [Option<f64>; 6],
    pub handoff_freeze: Option<f64>,
    pub recovery_dropping: Option<f64>,
    pub cap_rejection_rate: f64,
    pub utilization: Option<f64>,
}

pub struct SystemOracle {
    /// Flat count vectors `[n1, n2, I.., II.., III.., IV..]`.
    pub states: Vec<Vec<u32>>,
    pub index: HashMap<Vec<u32>, usize>,
    /// Row `index * M + (m - 1)`.
    pub stair_pi: Vec<f64>,
    pub macro_pi: Vec<f64>,
    pub metrics: OracleMetrics,
}

fn compositions(slots: usize, users: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() == slots {
        out.push(prefix.clone());
        return;
    }
    for n in 0..=users {
        prefix.push(n);
        compositions(slots, users - n, prefix, out);
        prefix.pop();
    }
}

impl SystemOracle {
    pub fn load(p: &Params, s: &[u32]) -> u32 {
        p.slots().iter().map(|&u| s[p.slot(u)] * p.occupancy(u)).sum()
    }
}

/// Every count vector with at most K users and load at most C.
pub fn brute_force_states(p: &Params) -> Vec<Vec<u32>> {
    let mut all = Vec::new();
    compositions(p.slots().len(), p.k, &mut Vec::new(), &mut all);
    all.retain(|s| SystemOracle::load(p, s) <= p.c);
    all.sort();
    all
}

fn convert(p: &Params, s: &[u32]) -> Vec<u32> {
    let mut out = s.to_vec();
    for j in 0..4 {
        let m = p.m(j);
        let base = p.slot(U::M(j, 0));
        let old = &s[base..=base + m];
        out[base] = 0;
        for i in 1..m {
            out[base + i] = old[i - 1];
        }
        out[base + m] = old[m] + old[m - 1];
    }
    out
}

fn family(u: U) -> usize {
    match u {
        U::S(k) => k,
        U::M(j, _) => 2 + j,
        U::Idle => unreachable!(),
    }
}

pub fn system_oracle(p: &Params, rates: &[(U, f64)]) -> SystemOracle {
    let states = brute_force_states(p);
    let index: HashMap<Vec<u32>, usize> = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
    let big_m = p.stairs;
    let [p1, p2] = p.p;
    let [mu1, mu2] = p.mu;
    let (r1, r2) = (p.r[0], p.r[1]);
    let lam = p.lam;
    let e = |s: &[u32], dec: Option<U>, inc: Option<U>| -> Vec<u32> {
        let mut t = s.to_vec();
        if let Some(u) = dec {
            t[p.slot(u)] -= 1;
        }
        if let Some(u) = inc {
            t[p.slot(u)] += 1;
        }
        t
    };

    let mut q = Vec::new();
    for (si, s) in states.iter().enumerate() {
        let load = SystemOracle::load(p, s);
        let busy: u32 = s.iter().sum();
        let idle = f64::from(p.k - busy);
        let n1 = f64::from(s[0]);
        let n2 = f64::from(s[1]);
        let mut events: Vec<(Vec<u32>, f64)> = Vec::new();

        // new calls
        if load + r1 <= p.c - p.c_hr {
            events.push((e(s, None, Some(U::S(0))), idle * lam * p1));
            if s[0] > 0 {
                events.push((e(s, Some(U::S(0)), Some(U::M(0, 0))), n1 * lam * p1));
            }
            if s[1] > 0 {
                events.push((e(s, Some(U::S(1)), Some(U::M(2, 0))), n2 * lam * p1));
            }
        }
        if load + r2 <= p.c - p.c_hr {
            events.push((e(s, None, Some(U::S(1))), idle * lam * p2));
            if s[0] > 0 {
                events.push((e(s, Some(U::S(0)), Some(U::M(1, 0))), n1 * lam * p2));
            }
            if s[1] > 0 {
                events.push((e(s, Some(U::S(1)), Some(U::M(3, 0))), n2 * lam * p2));
            }
        }
        // handoff arrivals
        if busy < p.k {
            for &(u, rate) in rates {
                let limit = p.c - p.c_r;
                match u {
                    U::M(j, i) => {
                        let fg = p.r[CLASS[j].1];
                        if load + p.occupancy(u) <= limit {
                            events.push((e(s, None, Some(u)), rate));
                        } else if i < p.m(j) && load + fg <= limit {
                            events.push((e(s, None, Some(U::M(j, p.m(j)))), rate));
                        }
                    }
                    _ => {
                        if load + p.occupancy(u) <= limit {
                            events.push((e(s, None, Some(u)), rate));
                        }
                    }
                }
            }
        }
        // departures and terminations
        for u in p.slots() {
            let n = s[p.slot(u)];
            if n == 0 {
                continue;
            }
            let n = f64::from(n);
            events.push((e(s, Some(u), None), n * p.eta));
            match u {
                U::S(0) => events.push((e(s, Some(u), None), n * mu1)),
                U::S(_) => events.push((e(s, Some(u), None), n * mu2)),
                U::M(0, i) => {
                    let w = f64::from(p.w[0][i]);
                    events.push((e(s, Some(u), Some(U::S(0))), n * (mu1 * (1.0 - w / f64::from(r1)) + mu1)));
                }
                U::M(1, i) => {
                    let w = p.w[1][i];
                    events.push((e(s, Some(u), Some(U::S(1))), n * mu1 * (1.0 - f64::from(w) / f64::from(r1))));
                    if load + w - r2 <= p.c {
                        events.push((e(s, Some(u), Some(U::S(0))), n * mu2));
                    } else {
                        events.push((e(s, Some(u), None), n * mu2));
                    }
                }
                U::M(2, i) => {
                    let w = f64::from(p.w[2][i]);
                    events.push((e(s, Some(u), Some(U::S(0))), n * mu2 * (1.0 - w / f64::from(r2))));
                    events.push((e(s, Some(u), Some(U::S(1))), n * mu1));
                }
                U::M(_, i) => {
                    let w = f64::from(p.w[3][i]);
                    events.push((e(s, Some(u), Some(U::S(1))), n * (mu2 * (1.0 - w / f64::from(r2)) + mu2)));
                }
                U::Idle => unreachable!(),
            }
        }

        for m in 1..=big_m {
            let from = si * big_m + m - 1;
            for (t, rate) in &events {
                if *rate > 0.0 {
                    let ti = *index.get(t).unwrap_or_else(|| panic!("target {t:?} outside the state space"));
                    q.push((from, ti * big_m + m - 1, *rate));
                }
            }
            let to = if m < big_m { si * big_m + m } else { index[&convert(p, s)] * big_m };
            if to != from {
                q.push((from, to, big_m as f64 / p.tau));
            }
        }
    }

    let stair_pi = dense_solve(states.len() * big_m, &q);
    let macro_pi: Vec<f64> = (0..states.len()).map(|i| stair_pi[i * big_m..(i + 1) * big_m].iter().sum()).collect();
    let metrics = metrics(p, &states, &macro_pi, rates);
    SystemOracle { states, index, stair_pi, macro_pi, metrics }
}

fn div(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

fn metrics(p: &Params, states: &[Vec<u32>], pi: &[f64], rates: &[(U, f64)]) -> OracleMetrics {
    let mut att = [0.0; 2];
    let mut blk = [0.0; 2];
    let mut iatt = [0.0; 2];
    let mut iblk = [0.0; 2];
    let mut h_off = [0.0; 6];
    let mut h_drop = [0.0; 6];
    let mut frz = 0.0;
    let mut cap = 0.0;
    let mut rec = 0.0;
    let mut rec_fail = 0.0;
    let mut load_sum = 0.0;
    for (s, &pr) in states.iter().zip(pi) {
        let load = SystemOracle::load(p, s);
        let busy: u32 = s.iter().sum();
        let idle = f64::from(p.k - busy);
        for k in 0..2 {
            let a = (idle + f64::from(s[0] + s[1])) * p.lam * p.p[k];
            let ia = idle * p.lam * p.p[k];
            att[k] += pr * a;
            iatt[k] += pr * ia;
            if load + p.r[k] > p.c - p.c_hr {
                blk[k] += pr * a;
                iblk[k] += pr * ia;
            }
        }
        for &(u, rate) in rates {
            if busy == p.k {
                cap += pr * rate;
                continue;
            }
            let f = family(u);
            h_off[f] += pr * rate;
            let limit = p.c - p.c_r;
            if load + p.occupancy(u) <= limit {
                continue;
            }
            match u {
                U::M(j, i) if i < p.m(j) && load + p.r[CLASS[j].1] <= limit => frz += pr * rate,
                _ => h_drop[f] += pr * rate,
            }
        }
        for i in 0..=p.m(1) {
            let n = f64::from(s[p.slot(U::M(1, i))]);
            rec += pr * n * p.mu[1];
            if load + p.w[1][i] > p.c + p.r[1] {
                rec_fail += pr * n * p.mu[1];
            }
        }
        load_sum += pr * f64::from(load);
    }
    OracleMetrics {
        blocking: [0, 1].map(|k| div(blk[k], att[k])),
        idle_blocking: [0, 1].map(|k| div(iblk[k], iatt[k])),
        handoff_dropping: div(h_drop.iter().sum(), h_off.iter().sum()),
        family_dropping: std::array::from_fn(|f| div(h_drop[f], h_off[f])),
        handoff_freeze: div(frz, h_off.iter().sum()),
        recovery_dropping: div(rec_fail, rec),
        cap_rejection_rate: cap,
        utilization: div(load_sum, f64::from(p.c)),
    }
}
