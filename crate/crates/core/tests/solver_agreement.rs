mod common;

use common::instance;
use proptest::prelude::*;
use rec_apc::solvers::{
    dp_state_count, policy_myopic, solve_bnb, solve_bruteforce, solve_dp, BnbOptions,
    QueueDiscipline, DP_STATE_BUDGET,
};
use rec_apc::valuation::{horizon_for_epsilon, lower_bound, upper_bound, value_policy, Policy};
use rec_apc::Instance;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_equals_brute_force(inst in instance(3, 3), h in 1usize..=6) {
        let dp = solve_dp(&inst, h).unwrap();
        let brute = solve_bruteforce(&inst, h).unwrap();
        prop_assert!((dp.value - brute.value).abs() <= 1e-12, "{} vs {}", dp.value, brute.value);
    }

    #[test]
    fn bnb_within_epsilon_of_dp(inst in instance(3, 3), eps_exp in 3i32..7) {
        let eps = 10f64.powi(-eps_exp);
        let h = horizon_for_epsilon(&inst, 1e-9).unwrap();
        prop_assume!(dp_state_count(inst.n_categories(), h) <= DP_STATE_BUDGET);
        let dp = solve_dp(&inst, h).unwrap();
        let bnb = solve_bnb(&inst, &BnbOptions::new(eps)).unwrap();
        prop_assert!(bnb.value >= dp.value - eps - 1e-8, "{} < {}", bnb.value, dp.value);
        prop_assert!(bnb.value <= dp.value + 1e-8 + 1e-9, "{} > {}", bnb.value, dp.value);
        prop_assert!(bnb.upper_certificate >= dp.value - 1e-8);
        prop_assert!(bnb.certificate_gap() <= eps + 1e-12);
        let direct = value_policy(&inst, inst.prior(), &bnb.extended_policy);
        prop_assert!((direct - bnb.value).abs() < 1e-9 * (1.0 + direct));
    }

    #[test]
    fn queue_disciplines_agree(inst in instance(3, 3)) {
        let eps = 1e-5;
        let best = solve_bnb(&inst, &BnbOptions::new(eps)).unwrap();
        let fifo = solve_bnb(&inst, &BnbOptions::new(eps).with_queue(QueueDiscipline::Fifo)).unwrap();
        prop_assert!((best.value - fifo.value).abs() <= 2.0 * eps);
    }

    #[test]
    fn parallel_search_is_epsilon_optimal(inst in instance(3, 3)) {
        let eps = 1e-5;
        let serial = solve_bnb(&inst, &BnbOptions::new(eps)).unwrap();
        let parallel = solve_bnb(&inst, &BnbOptions::new(eps).with_workers(3)).unwrap();
        prop_assert!((serial.value - parallel.value).abs() <= 2.0 * eps);
        prop_assert!(parallel.value >= lower_bound(&inst, inst.prior()).0 - 1e-12);
        prop_assert!(parallel.upper_certificate <= upper_bound(&inst, inst.prior()) + 1e-12);
    }

    #[test]
    fn dp_prefix_attains_dp_value(inst in instance(3, 3), h in 1usize..=8) {
        let dp = solve_dp(&inst, h).unwrap();
        prop_assert_eq!(dp.prefix.len(), h);
        let v = rec_apc::valuation::value_finite_horizon(&inst, inst.prior(), &dp.prefix, h).unwrap();
        prop_assert!((v - dp.value).abs() < 1e-12);
    }
}

fn prop2(d: f64) -> Instance {
    let a = 8.0 * d / (1.0 + 8.0 * d);
    Instance::from_matrix(vec![vec![a, 0.0], vec![0.8, 0.8]], vec![0.5, 0.5]).unwrap()
}

#[test]
fn myopic_can_be_arbitrarily_worse() {
    for d in [2.0, 10.0, 100.0] {
        let inst = prop2(d);
        let myopic = policy_myopic(&inst, inst.prior(), 1).unwrap();
        assert_eq!(myopic, vec![1]);
        let v_myopic = value_policy(&inst, inst.prior(), &Policy::fixed(1));
        assert!((v_myopic - 4.0).abs() < 1e-12);
        let best = solve_bnb(&inst, &BnbOptions::new(1e-6)).unwrap();
        assert!(best.value >= d * v_myopic - 1e-6, "d={d}: {}", best.value);
    }
}

#[test]
fn node_budget_reported() {
    let inst = Instance::from_matrix(
        vec![vec![0.4011, 0.8521, 0.8301], vec![0.7683, 0.7837, 0.8314], vec![0.7674, 0.7832, 0.4051]],
        vec![0.3755, 0.3921, 0.2324],
    )
    .unwrap();
    let err = solve_bnb(&inst, &BnbOptions::new(1e-9).with_node_budget(3)).unwrap_err();
    assert!(matches!(err, rec_apc::Error::NodeBudgetExceeded { budget: 3 }));
}
