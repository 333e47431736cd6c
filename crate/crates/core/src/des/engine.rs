use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CompletionRecord, SimError, SimStats};
use crate::model::{
    outcome_at_load, ConnType, HandoffOutcome, ModelConfig, MultiClass, SystemState, UserState, WithdrawalSchedule,
};
use crate::system_chain::handoff_family;
use crate::user_chain::HandoffRates;

/// Controls for one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub horizon: f64,
    /// Leading share of the horizon excluded from all statistics.
    pub warmup_fraction: f64,
    /// Master seed; every replication and event family gets its own stream.
    pub seed: u64,
    pub replication: u64,
    /// Keep a [`CompletionRecord`] for every finished connection.
    pub record_completions: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { horizon: 5.0e4, warmup_fraction: 0.1, seed: 1, replication: 0, record_completions: false }
    }
}

impl SimOptions {
    fn validate(&self) -> Result<(), SimError> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::InvalidOptions(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::InvalidOptions(format!(
                "warm-up fraction must lie in [0, 1), got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }
}

// Stream ids under one replication. Handoff families use HANDOFF_STREAM + family.
const ATTEMPT_STREAM: u64 = 0;
const DEPARTURE_STREAM: u64 = 1;
const WORK_STREAM: u64 = 2;
const HANDOFF_STREAM: u64 = 8;

fn stream(seed: u64, replication: u64, family: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replication << 8) | family);
    rng
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Attempt,
    Departure,
    Handoff(usize),
    Complete { slot: usize, version: u64 },
    Convert(u64),
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Default)]
struct Queue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    versions: u64,
}

impl Queue {
    fn push(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled { time, seq: self.seq, event });
    }

    fn next_version(&mut self) -> u64 {
        self.versions += 1;
        self.versions
    }
}

#[derive(Debug, Clone)]
struct Conn {
    ty: ConnType,
    width: u32,
    alloc: u32,
    remaining: f64,
    since: f64,
    version: u64,
    start: f64,
    nominal: f64,
    reshaped: bool,
}

impl Conn {
    fn rate(&self) -> f64 {
        f64::from(self.alloc) / f64::from(self.width)
    }

    fn advance(&mut self, now: f64) {
        self.remaining -= self.rate() * (now - self.since);
        self.since = now;
    }

    fn schedule(&mut self, slot: usize, now: f64, queue: &mut Queue) {
        self.version = queue.next_version();
        if self.alloc > 0 {
            queue.push(now + self.remaining / self.rate(), Event::Complete { slot, version: self.version });
        }
    }

    /// Changes the allocation, rescheduling the completion. Returns the load delta.
    fn reallocate(&mut self, alloc: u32, slot: usize, now: f64, queue: &mut Queue) -> i64 {
        if alloc == self.alloc {
            return 0;
        }
        self.advance(now);
        let delta = i64::from(alloc) - i64::from(self.alloc);
        self.alloc = alloc;
        self.reshaped = true;
        self.schedule(slot, now, queue);
        delta
    }
}

#[derive(Debug, Clone)]
struct Slot {
    state: UserState,
    fg: Option<Conn>,
    bg: Option<Conn>,
}

impl Slot {
    fn idle() -> Self {
        Slot { state: UserState::Idle, fg: None, bg: None }
    }

    fn alloc(&self) -> u32 {
        self.fg.as_ref().map_or(0, |c| c.alloc) + self.bg.as_ref().map_or(0, |c| c.alloc)
    }
}

struct Clock {
    rng: ChaCha8Rng,
    exp: Option<Exp<f64>>,
}

impl Clock {
    fn new(rng: ChaCha8Rng, rate: f64) -> Result<Self, SimError> {
        let exp = if rate > 0.0 {
            Some(Exp::new(rate).map_err(|e| SimError::InvalidOptions(format!("event rate {rate}: {e}")))?)
        } else {
            None
        };
        Ok(Clock { rng, exp })
    }

    fn next(&mut self, now: f64) -> Option<f64> {
        self.exp.map(|e| now + e.sample(&mut self.rng))
    }
}

struct Sim<'a> {
    cfg: &'a ModelConfig,
    sched: &'a WithdrawalSchedule,
    slots: Vec<Slot>,
    load: u32,
    now: f64,
    last: f64,
    warmup: f64,
    queue: Queue,
    attempts: Clock,
    departures: Clock,
    handoffs: Vec<Clock>,
    stage_pick: Vec<Option<WeightedIndex<f64>>>,
    work_rng: ChaCha8Rng,
    work: [Exp<f64>; 2],
    stats: SimStats,
    record: bool,
    trace: Option<&'a mut dyn Write>,
}

/// Runs one replication. `cfg` must be valid.
pub fn run(
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
    rates: &HandoffRates,
    opts: &SimOptions,
) -> Result<SimStats, SimError> {
    simulate(cfg, sched, rates, opts, None)
}

/// As [`run`], writing one line per event to `trace`:
/// `<time> <category> <state digest>`, the digest as printed by [`SystemState`].
pub fn run_traced(
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
    rates: &HandoffRates,
    opts: &SimOptions,
    trace: &mut dyn Write,
) -> Result<SimStats, SimError> {
    simulate(cfg, sched, rates, opts, Some(trace))
}

/// Runs replications `0..n` of `opts.seed` in parallel.
pub fn replicate(
    cfg: &ModelConfig,
    sched: &WithdrawalSchedule,
    rates: &HandoffRates,
    opts: &SimOptions,
    n: usize,
) -> Result<Vec<SimStats>, SimError> {
    (0..n as u64)
        .into_par_iter()
        .map(|replication| run(cfg, sched, rates, &SimOptions { replication, ..opts.clone() }))
        .collect()
}

fn simulate<'a>(
    cfg: &'a ModelConfig,
    sched: &'a WithdrawalSchedule,
    rates: &HandoffRates,
    opts: &SimOptions,
    trace: Option<&'a mut dyn Write>,
) -> Result<SimStats, SimError> {
    opts.validate()?;
    let k = f64::from(cfg.users);
    let mut family_rate = [0.0; 6];
    let mut stage_weights: Vec<Vec<f64>> = vec![Vec::new(); 6];
    for (u, rate) in rates.iter() {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(SimError::InvalidOptions(format!("handoff rate for {u:?} is {rate}")));
        }
        let f = handoff_family(u);
        family_rate[f] += rate;
        stage_weights[f].push(rate);
    }
    let stage_pick = stage_weights
        .into_iter()
        .enumerate()
        .map(|(f, w)| (f >= 2 && family_rate[f] > 0.0).then(|| WeightedIndex::new(w).expect("positive total weight")))
        .collect();
    let handoffs = (0..6)
        .map(|f| Clock::new(stream(opts.seed, opts.replication, HANDOFF_STREAM + f as u64), family_rate[f]))
        .collect::<Result<_, _>>()?;
    let work = ConnType::ALL.map(|ty| Exp::new(cfg.end_rate(ty)).expect("end rates are positive"));

    let mut sim = Sim {
        cfg,
        sched,
        slots: vec![Slot::idle(); cfg.users as usize],
        load: 0,
        now: 0.0,
        last: 0.0,
        warmup: opts.horizon * opts.warmup_fraction,
        queue: Queue::default(),
        attempts: Clock::new(stream(opts.seed, opts.replication, ATTEMPT_STREAM), k * cfg.call_rate)?,
        departures: Clock::new(stream(opts.seed, opts.replication, DEPARTURE_STREAM), k * cfg.residence_rate)?,
        handoffs,
        stage_pick,
        work_rng: stream(opts.seed, opts.replication, WORK_STREAM),
        work,
        stats: SimStats {
            seed: opts.seed,
            replication: opts.replication,
            observed_time: opts.horizon * (1.0 - opts.warmup_fraction),
            ..SimStats::default()
        },
        record: opts.record_completions,
        trace,
    };
    sim.execute(opts.horizon)?;
    Ok(sim.stats)
}

impl Sim<'_> {
    fn execute(&mut self, horizon: f64) -> Result<(), SimError> {
        if let Some(t) = self.attempts.next(0.0) {
            self.queue.push(t, Event::Attempt);
        }
        if let Some(t) = self.departures.next(0.0) {
            self.queue.push(t, Event::Departure);
        }
        for f in 0..6 {
            if let Some(t) = self.handoffs[f].next(0.0) {
                self.queue.push(t, Event::Handoff(f));
            }
        }
        self.queue.push(self.cfg.period, Event::Convert(1));

        while let Some(Scheduled { time, event, .. }) = self.queue.heap.pop() {
            if time > horizon {
                break;
            }
            self.accumulate(time);
            self.now = time;
            let category = match event {
                Event::Attempt => self.on_attempt(),
                Event::Departure => self.on_departure(),
                Event::Handoff(f) => self.on_handoff(f),
                Event::Complete { slot, version } => self.on_complete(slot, version)?,
                Event::Convert(k) => self.on_convert(k),
            };
            self.check()?;
            if let Some(category) = category {
                self.emit(category)?;
            }
        }
        self.accumulate(horizon);
        Ok(())
    }

    fn measuring(&self) -> bool {
        self.now >= self.warmup
    }

    fn accumulate(&mut self, until: f64) {
        let from = self.last.max(self.warmup);
        if until > from {
            self.stats.load_integral += f64::from(self.load) * (until - from);
        }
        self.last = until;
    }

    fn shift_load(&mut self, delta: i64) {
        self.load = u32::try_from(i64::from(self.load) + delta).expect("load stays nonnegative");
    }

    fn new_conn(&mut self, ty: ConnType, alloc: u32, slot: usize) -> Conn {
        let work = self.work[ty.index()].sample(&mut self.work_rng);
        let mut conn = Conn {
            ty,
            width: self.cfg.width(ty),
            alloc,
            remaining: work,
            since: self.now,
            version: 0,
            start: self.now,
            nominal: work,
            reshaped: alloc != self.cfg.width(ty),
        };
        conn.schedule(slot, self.now, &mut self.queue);
        conn
    }

    fn on_attempt(&mut self) -> Option<&'static str> {
        if let Some(t) = self.attempts.next(self.now) {
            self.queue.push(t, Event::Attempt);
        }
        let rng = &mut self.attempts.rng;
        let slot = rng.random_range(0..self.slots.len());
        let ty = if rng.random::<f64>() < self.cfg.t1_share { ConnType::T1 } else { ConnType::T2 };
        let state = self.slots[slot].state;
        if matches!(state, UserState::Multi { .. }) {
            return None;
        }
        let idle = state == UserState::Idle;
        let admitted = self.load + self.cfg.width(ty) <= self.cfg.new_call_limit();
        if self.measuring() {
            let k = ty.index();
            self.stats.new_offered[k] += 1;
            if admitted {
                self.stats.new_accepted[k] += 1;
            } else {
                self.stats.new_blocked[k] += 1;
            }
            if idle {
                self.stats.idle_offered[k] += 1;
                if !admitted {
                    self.stats.idle_blocked[k] += 1;
                }
            }
        }
        if !admitted {
            return Some(if ty == ConnType::T1 { "block_t1" } else { "block_t2" });
        }
        let width = self.cfg.width(ty);
        let conn = self.new_conn(ty, width, slot);
        self.shift_load(i64::from(width));
        let s = &mut self.slots[slot];
        match state {
            UserState::Idle => {
                s.state = UserState::Single(ty);
                s.fg = Some(conn);
            }
            UserState::Single(existing) => {
                s.state = UserState::Multi { class: MultiClass::from_pair(existing, ty), stage: 0 };
                s.bg = s.fg.take();
                s.fg = Some(conn);
            }
            UserState::Multi { .. } => unreachable!(),
        }
        Some(if ty == ConnType::T1 { "accept_t1" } else { "accept_t2" })
    }

    fn on_departure(&mut self) -> Option<&'static str> {
        if let Some(t) = self.departures.next(self.now) {
            self.queue.push(t, Event::Departure);
        }
        let slot = self.departures.rng.random_range(0..self.slots.len());
        if self.slots[slot].state == UserState::Idle {
            return None;
        }
        let freed = self.slots[slot].alloc();
        self.shift_load(-i64::from(freed));
        self.slots[slot] = Slot::idle();
        if self.measuring() {
            self.stats.departures += 1;
        }
        Some("departure")
    }

    fn on_handoff(&mut self, family: usize) -> Option<&'static str> {
        if let Some(t) = self.handoffs[family].next(self.now) {
            self.queue.push(t, Event::Handoff(family));
        }
        let arriving = match family {
            0 => UserState::Single(ConnType::T1),
            1 => UserState::Single(ConnType::T2),
            _ => {
                let pick = self.stage_pick[family].as_ref().expect("family has a positive rate");
                let stage = pick.sample(&mut self.handoffs[family].rng);
                UserState::Multi { class: MultiClass::ALL[family - 2], stage }
            }
        };
        let measuring = self.measuring();
        if measuring {
            self.stats.handoff_offered[family] += 1;
        }
        let Some(slot) = self.slots.iter().position(|s| s.state == UserState::Idle) else {
            if measuring {
                self.stats.handoff_capped[family] += 1;
            }
            return Some("handoff_cap");
        };
        let outcome = outcome_at_load(self.load, arriving, self.cfg, self.sched);
        let entered = match (outcome, arriving) {
            (HandoffOutcome::Drop, _) => {
                if measuring {
                    self.stats.handoff_dropped[family] += 1;
                }
                return Some("handoff_drop");
            }
            (HandoffOutcome::AcceptFrozen, UserState::Multi { class, .. }) => {
                if measuring {
                    self.stats.handoff_frozen[family] += 1;
                }
                UserState::Multi { class, stage: self.sched.stages(class) }
            }
            (HandoffOutcome::AcceptFrozen, _) => unreachable!("single users are never frozen"),
            (HandoffOutcome::AcceptFull, u) => {
                if measuring {
                    self.stats.handoff_full[family] += 1;
                }
                u
            }
        };
        let mut user = Slot { state: entered, fg: None, bg: None };
        match entered {
            UserState::Single(ty) => user.fg = Some(self.new_conn(ty, self.cfg.width(ty), slot)),
            UserState::Multi { class, stage } => {
                let (fg, bg) = (class.foreground(), class.background());
                user.fg = Some(self.new_conn(fg, self.cfg.width(fg), slot));
                let alloc = self.cfg.width(bg) - self.sched.withdrawn(class, stage);
                user.bg = Some(self.new_conn(bg, alloc, slot));
            }
            UserState::Idle => unreachable!(),
        }
        self.shift_load(i64::from(user.alloc()));
        self.slots[slot] = user;
        Some(if outcome == HandoffOutcome::AcceptFrozen { "handoff_frozen" } else { "handoff_full" })
    }

    fn on_complete(&mut self, slot: usize, version: u64) -> Result<Option<&'static str>, SimError> {
        let s = &self.slots[slot];
        let is_fg = s.fg.as_ref().is_some_and(|c| c.version == version);
        let is_bg = s.bg.as_ref().is_some_and(|c| c.version == version);
        if !is_fg && !is_bg {
            return Ok(None);
        }
        let now = self.now;
        let measuring = self.measuring();
        let mut done = if is_fg { self.slots[slot].fg.take() } else { self.slots[slot].bg.take() }
            .expect("matched connection");
        if done.alloc == 0 {
            return Err(self.violation("a connection without subchannels completed"));
        }
        done.advance(now);
        if done.remaining.abs() > 1e-9 * done.nominal.max(1.0) {
            return Err(self.violation(&format!("completion with {} work left", done.remaining)));
        }
        if measuring {
            self.stats.completions[done.ty.index()] += 1;
        }
        if self.record {
            self.stats.completion_log.push(CompletionRecord {
                ty: done.ty,
                start: done.start,
                end: now,
                nominal: done.nominal,
                reshaped: done.reshaped,
            });
        }
        self.shift_load(-i64::from(done.alloc));

        let state = self.slots[slot].state;
        let category = match state {
            UserState::Idle => unreachable!("idle users hold no connections"),
            UserState::Single(_) => {
                self.slots[slot] = Slot::idle();
                "completion"
            }
            UserState::Multi { class, .. } if is_bg => {
                self.slots[slot].state = UserState::Single(class.foreground());
                "background_end"
            }
            UserState::Multi { class, stage } => {
                let mut bg = self.slots[slot].bg.take().expect("two-connection user has a background");
                let after = self.load + bg.width - bg.alloc;
                if measuring {
                    self.stats.recovery_attempts[class.index()] += 1;
                }
                if after > self.cfg.channels {
                    if measuring {
                        self.stats.recovery_failures[class.index()] += 1;
                    }
                    self.shift_load(-i64::from(bg.alloc));
                    self.slots[slot] = Slot::idle();
                    "recovery_drop"
                } else {
                    bg.advance(now);
                    if measuring && stage >= 1 {
                        self.stats.recovery_samples[bg.ty.index()].push(bg.remaining);
                    }
                    let delta = bg.reallocate(bg.width, slot, now, &mut self.queue);
                    self.shift_load(delta);
                    self.slots[slot] = Slot { state: UserState::Single(bg.ty), fg: Some(bg), bg: None };
                    "recovery"
                }
            }
        };
        Ok(Some(category))
    }

    fn on_convert(&mut self, k: u64) -> Option<&'static str> {
        self.queue.push((k + 1) as f64 * self.cfg.period, Event::Convert(k + 1));
        let now = self.now;
        let mut delta = 0;
        for (i, s) in self.slots.iter_mut().enumerate() {
            let UserState::Multi { class, stage } = s.state else { continue };
            if stage == self.sched.stages(class) {
                continue;
            }
            let stage = stage + 1;
            s.state = UserState::Multi { class, stage };
            let bg = s.bg.as_mut().expect("two-connection user has a background");
            let alloc = bg.width - self.sched.withdrawn(class, stage);
            delta += bg.reallocate(alloc, i, now, &mut self.queue);
        }
        self.shift_load(delta);
        Some("convert")
    }

    fn violation(&self, what: &str) -> SimError {
        SimError::Invariant { time: self.now, what: what.to_string() }
    }

    fn check(&self) -> Result<(), SimError> {
        let total: u32 = self.slots.iter().map(Slot::alloc).sum();
        if total != self.load {
            return Err(self.violation(&format!("tracked load {} but connections hold {total}", self.load)));
        }
        if total > self.cfg.channels {
            return Err(self.violation(&format!("load {total} exceeds {} subchannels", self.cfg.channels)));
        }
        for (i, s) in self.slots.iter().enumerate() {
            let fg = s.fg.as_ref().map(|c| (c.ty, c.alloc));
            let bg = s.bg.as_ref().map(|c| (c.ty, c.alloc));
            let expected = match s.state {
                UserState::Idle => (None, None),
                UserState::Single(ty) => (Some((ty, self.cfg.width(ty))), None),
                UserState::Multi { class, stage } => {
                    let (f, b) = (class.foreground(), class.background());
                    (
                        Some((f, self.cfg.width(f))),
                        Some((b, self.cfg.width(b) - self.sched.withdrawn(class, stage))),
                    )
                }
            };
            if (fg, bg) != expected {
                return Err(self.violation(&format!("slot {i} in {:?} holds {fg:?} / {bg:?}", s.state)));
            }
            for c in s.fg.iter().chain(&s.bg) {
                if c.remaining < -1e-9 {
                    return Err(self.violation(&format!("slot {i} has negative work {}", c.remaining)));
                }
            }
        }
        Ok(())
    }

    fn digest(&self) -> SystemState {
        let mut s = SystemState::empty(self.sched);
        for slot in &self.slots {
            if slot.state != UserState::Idle {
                s = s.moved(None, Some(slot.state));
            }
        }
        s
    }

    fn emit(&mut self, category: &str) -> Result<(), SimError> {
        if self.trace.is_none() {
            return Ok(());
        }
        let line = format!("{:.9} {} {}", self.now, category, self.digest());
        let out = self.trace.as_mut().expect("checked above");
        writeln!(out, "{line}").map_err(|e| SimError::Trace(e.to_string()))
    }
}
