mod common;

use common::{instance, sized_instance};
use proptest::prelude::*;
use rec_apc::pomdp::{build_pomdp, PomdpModel, LIKE};
use rec_apc::valuation::{value_finite_horizon, value_policy, Policy};
use rec_apc::Instance;

fn two_or_three() -> impl Strategy<Value = Instance> {
    prop_oneof![sized_instance(2, 2), sized_instance(3, 3)]
}

proptest! {
    #[test]
    fn discounted_value_equals_policy_value(
        inst in two_or_three(),
        raw in prop::collection::vec(0usize..3, 0..5),
        tail in 0usize..3,
    ) {
        let k = inst.n_categories();
        let policy = Policy::new(raw.iter().map(|a| a % k).collect(), tail % k);
        let model = build_pomdp(&inst);
        let direct = value_policy(&inst, inst.prior(), &policy);
        let via_pomdp = model.discounted_value(&policy).unwrap();
        prop_assert!((direct - via_pomdp).abs() < 1e-9, "{direct} vs {via_pomdp}");
    }

    #[test]
    fn two_step_value_matches(inst in sized_instance(2, 2)) {
        let model = build_pomdp(&inst);
        let direct = value_finite_horizon(&inst, inst.prior(), &[0, 1], 2).unwrap();
        prop_assert!((model.sequence_value(&[0, 1]) - direct).abs() < 1e-12);
    }

    #[test]
    fn filtering_matches_bayes_updates(
        inst in instance(3, 3),
        raw in prop::collection::vec(0usize..3, 1..8),
    ) {
        let seq: Vec<usize> = raw.iter().map(|a| a % inst.n_categories()).collect();
        let Ok(walk) = inst.walk(&seq, inst.prior()) else { return Ok(()); };
        let model = build_pomdp(&inst);
        let mut state = model.start.clone();
        for &a in &seq {
            state = model.filter(&state, a, LIKE).unwrap();
        }
        let m = inst.n_types();
        for t in 0..m {
            prop_assert!((state[m + t] - walk.end_belief[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn text_round_trip_and_stochastic_rows(inst in instance(3, 3)) {
        let model = build_pomdp(&inst);
        prop_assert!(model.max_row_error() < 1e-9);
        let back = PomdpModel::parse(&model.to_text()).unwrap();
        prop_assert!(back.max_row_error() < 1e-9);
        prop_assert_eq!(&back.states, &model.states);
        prop_assert_eq!(&back.actions, &model.actions);
        prop_assert!((back.discount - model.discount).abs() < 1e-12);
        for (a, b) in back.transitions.iter().zip(&model.transitions) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in back.start.iter().zip(&model.start) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert_eq!(&back.rewards, &model.rewards);
        prop_assert_eq!(&back.observation_probs, &model.observation_probs);
    }
}

#[test]
fn rescaled_survival_never_exceeds_one() {
    let inst = Instance::from_matrix(
        vec![vec![0.3, 0.9], vec![0.6, 0.2]],
        vec![0.4, 0.6],
    )
    .unwrap();
    let model = build_pomdp(&inst);
    for a in 0..2 {
        for m in 0..2 {
            assert!(model.transition(a, 2 + m, 2 + m) <= 1.0);
        }
    }
    assert_eq!(model.discount, 0.9);
}
