use proptest::prelude::*;
use tfrc_core::des::{run, run_traced, SimError, SimOptions, SimStats};
use tfrc_core::model::{ModelConfig, WithdrawalSchedule};
use tfrc_core::user_chain::{solve_user_chain, HandoffRates};

fn setup(cfg: &ModelConfig) -> (WithdrawalSchedule, HandoffRates) {
    let sched = WithdrawalSchedule::from_config(cfg);
    let (_, rates) = solve_user_chain(cfg, &sched, &Default::default()).unwrap();
    (sched, rates)
}

fn short(seed: u64) -> SimOptions {
    SimOptions { horizon: 2_000.0, seed, ..SimOptions::default() }
}

#[test]
fn quiet_cell_has_no_events() {
    let cfg = ModelConfig { call_rate: 0.0, ..ModelConfig::default() };
    let sched = WithdrawalSchedule::from_config(&cfg);
    let mut out = Vec::new();
    let opts = SimOptions { horizon: 100.0, ..SimOptions::default() };
    let stats = run_traced(&cfg, &sched, &HandoffRates::zero(&sched), &opts, &mut out).unwrap();
    assert_eq!(stats, SimStats { seed: 1, observed_time: 90.0, ..SimStats::default() });
    let text = String::from_utf8(out).unwrap();
    assert!(text.lines().all(|l| l.contains(" convert n1=0 n2=0 ")));
}

#[test]
fn same_seed_same_stats() {
    let cfg = ModelConfig::default();
    let (sched, rates) = setup(&cfg);
    let a = run(&cfg, &sched, &rates, &short(11)).unwrap();
    let b = run(&cfg, &sched, &rates, &short(11)).unwrap();
    assert_eq!(a, b);
    let c = run(&cfg, &sched, &rates, &SimOptions { replication: 1, ..short(11) }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn counters_balance_and_window() {
    let cfg = ModelConfig::default();
    let (sched, rates) = setup(&cfg);
    let stats = run(&cfg, &sched, &rates, &SimOptions { warmup_fraction: 0.5, ..short(3) }).unwrap();
    assert!(stats.counters_balance());
    assert_eq!(stats.observed_time, 1_000.0);
    assert!(stats.handoff_frozen.iter().sum::<u64>() > 0);
    assert!(stats.load_integral <= f64::from(cfg.channels) * stats.observed_time);
}

#[test]
fn untouched_connections_keep_their_duration() {
    let cfg = ModelConfig::default();
    let (sched, rates) = setup(&cfg);
    let stats = run(&cfg, &sched, &rates, &SimOptions { record_completions: true, ..short(5) }).unwrap();
    let (plain, reshaped): (Vec<_>, Vec<_>) = stats.completion_log.iter().partition(|r| !r.reshaped);
    assert!(!plain.is_empty() && !reshaped.is_empty());
    for r in &plain {
        assert!((r.end - r.start - r.nominal).abs() <= 1e-9 * r.end.max(1.0), "{r:?}");
    }
    // a reshaped connection only ever runs at or below full rate
    for r in &reshaped {
        assert!(r.end - r.start >= r.nominal - 1e-9 * r.end.max(1.0), "{r:?}");
    }
}

#[test]
fn trace_lines_are_well_formed() {
    let cfg = ModelConfig::default();
    let (sched, rates) = setup(&cfg);
    let mut out = Vec::new();
    let opts = SimOptions { horizon: 50.0, ..SimOptions::default() };
    let traced = run_traced(&cfg, &sched, &rates, &opts, &mut out).unwrap();
    assert_eq!(traced, run(&cfg, &sched, &rates, &opts).unwrap());
    let text = String::from_utf8(out).unwrap();
    let mut last = 0.0;
    let categories = [
        "accept_t1", "accept_t2", "block_t1", "block_t2", "departure", "handoff_full", "handoff_frozen",
        "handoff_drop", "handoff_cap", "completion", "background_end", "recovery", "recovery_drop", "convert",
    ];
    let mut lines = 0;
    for line in text.lines() {
        let mut parts = line.splitn(3, ' ');
        let t: f64 = parts.next().unwrap().parse().unwrap();
        let category = parts.next().unwrap();
        let digest = parts.next().unwrap();
        assert!(t >= last);
        last = t;
        assert!(categories.contains(&category), "{category}");
        assert!(digest.starts_with("n1=") && digest.contains(" IV=["), "{digest}");
        lines += 1;
    }
    assert!(lines > 100);
}

#[test]
fn bad_options_are_rejected() {
    let cfg = ModelConfig::default();
    let (sched, rates) = setup(&cfg);
    for opts in [
        SimOptions { horizon: 0.0, ..SimOptions::default() },
        SimOptions { horizon: f64::INFINITY, ..SimOptions::default() },
        SimOptions { warmup_fraction: 1.0, ..SimOptions::default() },
    ] {
        assert!(matches!(run(&cfg, &sched, &rates, &opts), Err(SimError::InvalidOptions(_))));
    }
}

fn small_config() -> impl Strategy<Value = ModelConfig> {
    (1u32..=8, 0u32..=8, 0u32..=8, 2u32..=4, 1u32..=3, 1u32..=4, 1u32..=3, 0.0f64..=1.0, 0.1f64..3.0).prop_map(
        |(channels, a, b, r1, r2, users, step, t1_share, period)| {
            let handoff_reserve = a.min(channels);
            ModelConfig {
                channels,
                handoff_reserve,
                recovery_reserve: b.min(handoff_reserve),
                t1_subchannels: r1,
                t2_subchannels: r2.min(r1 - 1),
                users,
                withdraw_step: step,
                t1_share,
                t2_share: 1.0 - t1_share,
                period,
                stairs: 2,
                call_rate: 1.5,
                residence_rate: 0.5,
                ..ModelConfig::default()
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    // every event checks load <= C and the per-user allocation pattern
    #[test]
    fn invariants_hold_on_random_cells(cfg in small_config(), seed in any::<u64>()) {
        let (sched, rates) = setup(&cfg);
        let stats: SimStats = run(&cfg, &sched, &rates, &SimOptions { horizon: 300.0, seed, ..SimOptions::default() }).unwrap();
        prop_assert!(stats.counters_balance());
    }
}
