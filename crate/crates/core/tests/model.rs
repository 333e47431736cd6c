mod common;

use common::oracle::{brute_force_states, Params};
use proptest::prelude::*;
use tfrc_core::model::{
    enumerate_states, handoff_outcome, new_call_admissible, ConnType, HandoffOutcome, ModelConfig, MultiClass,
    UserState, WithdrawalSchedule,
};

fn config_strategy() -> impl Strategy<Value = ModelConfig> {
    (0u32..=8, 0u32..=8, 0u32..=8, 2u32..=4, 1u32..=3, 0u32..=4, 1u32..=3).prop_map(
        |(channels, a, b, r1, r2, users, step)| {
            let handoff_reserve = a.min(channels);
            ModelConfig {
                channels,
                handoff_reserve,
                recovery_reserve: b.min(handoff_reserve),
                t1_subchannels: r1,
                t2_subchannels: r2.min(r1 - 1),
                users,
                withdraw_step: step,
                ..ModelConfig::default()
            }
        },
    )
}

#[test]
fn tiny_space_matches_brute_force() {
    let cfg = ModelConfig {
        channels: 2,
        recovery_reserve: 0,
        handoff_reserve: 0,
        users: 1,
        withdraw_step: 2,
        ..ModelConfig::default()
    };
    let sched = WithdrawalSchedule::from_config(&cfg);
    let got: Vec<Vec<u32>> = enumerate_states(&cfg, &sched).unwrap().iter().map(common::flat).collect();
    assert_eq!(got, brute_force_states(&Params::from_config(&cfg)));
}

#[test]
fn reference_space_matches_brute_force() {
    let cfg = ModelConfig::default();
    let sched = WithdrawalSchedule::from_config(&cfg);
    let got: Vec<Vec<u32>> = enumerate_states(&cfg, &sched).unwrap().iter().map(common::flat).collect();
    assert_eq!(got, brute_force_states(&Params::from_config(&cfg)));
}

#[test]
fn schedule_examples() {
    let sched = |r1, r2, step| {
        let cfg = ModelConfig { t1_subchannels: r1, t2_subchannels: r2, withdraw_step: step, ..ModelConfig::default() };
        WithdrawalSchedule::from_config(&cfg)
    };
    let s = sched(2, 1, 1);
    assert_eq!(s.amounts(MultiClass::I), &[0, 1, 2]);
    assert_eq!(s.amounts(MultiClass::III), &[0, 1]);
    assert_eq!(sched(3, 1, 2).amounts(MultiClass::I), &[0, 2, 3]);
    assert_eq!(sched(2, 1, 4).amounts(MultiClass::II), &[0, 2]);
}

#[test]
fn occupancy_examples() {
    let cfg = ModelConfig::default();
    let sched = WithdrawalSchedule::from_config(&cfg);
    assert_eq!(UserState::Idle.occupied_subchannels(&cfg, &sched), 0);
    assert_eq!(UserState::Multi { class: MultiClass::I, stage: 1 }.occupied_subchannels(&cfg, &sched), 3);
    assert_eq!(UserState::Multi { class: MultiClass::II, stage: 2 }.occupied_subchannels(&cfg, &sched), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn enumeration_matches_brute_force(cfg in config_strategy()) {
        let sched = WithdrawalSchedule::from_config(&cfg);
        let got: Vec<Vec<u32>> = enumerate_states(&cfg, &sched).unwrap().iter().map(common::flat).collect();
        prop_assert_eq!(got, brute_force_states(&Params::from_config(&cfg)));
    }

    #[test]
    fn conversion_properties(cfg in config_strategy()) {
        let sched = WithdrawalSchedule::from_config(&cfg);
        for s in enumerate_states(&cfg, &sched).unwrap() {
            let c = s.convert();
            prop_assert_eq!(c.busy_users(), s.busy_users());
            prop_assert!(c.cell_load(&cfg, &sched) <= s.cell_load(&cfg, &sched));
            prop_assert_eq!((c.n1, c.n2), (s.n1, s.n2));
            let frozen_only = MultiClass::ALL.iter().all(|&j| s.class(j)[..sched.stages(j)].iter().all(|&n| n == 0));
            if frozen_only {
                prop_assert_eq!(&c, &s);
            }
        }
    }

    #[test]
    fn frozen_users_hold_their_foreground(cfg in config_strategy()) {
        let sched = WithdrawalSchedule::from_config(&cfg);
        for class in MultiClass::ALL {
            let frozen = UserState::Multi { class, stage: sched.stages(class) };
            prop_assert_eq!(frozen.occupied_subchannels(&cfg, &sched), cfg.width(class.foreground()));
        }
    }

    #[test]
    fn threshold_nesting(cfg in config_strategy()) {
        let sched = WithdrawalSchedule::from_config(&cfg);
        for s in enumerate_states(&cfg, &sched).unwrap() {
            for ty in ConnType::ALL {
                if new_call_admissible(&s, ty, &cfg, &sched) {
                    prop_assert_ne!(handoff_outcome(&s, UserState::Single(ty), &cfg, &sched), HandoffOutcome::Drop);
                }
            }
        }
    }
}
