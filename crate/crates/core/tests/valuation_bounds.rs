mod common;

use common::{example1, instance, oracle_value};
use proptest::prelude::*;
use rec_apc::solvers::{solve_dp_from, DP_STATE_BUDGET, dp_state_count};
use rec_apc::valuation::{
    horizon_for_epsilon, lower_bound, prefix_bounds, upper_bound, value_finite_horizon,
    value_fixed, value_policy, Policy,
};
use rec_apc::Instance;

fn with_policy() -> impl Strategy<Value = (Instance, Policy)> {
    instance(3, 3).prop_flat_map(|inst| {
        let k = inst.n_categories();
        (
            Just(inst),
            prop::collection::vec(0..k, 0..6),
            0..k,
        )
            .prop_map(|(i, p, t)| (i, Policy::new(p, t)))
    })
}

proptest! {
    #[test]
    fn policy_value_matches_survival_sums((inst, pol) in with_policy()) {
        let v = value_policy(&inst, inst.prior(), &pol);
        let oracle = oracle_value(&inst, inst.prior(), &pol.prefix, pol.tail);
        prop_assert!((v - oracle).abs() <= 1e-9 * (1.0 + oracle));
    }

    #[test]
    fn truncation_error_within_epsilon(
        (inst, pol) in with_policy(),
        eps_exp in 2i32..9,
    ) {
        let eps = 10f64.powi(-eps_exp);
        let h = horizon_for_epsilon(&inst, eps).unwrap();
        let seq: Vec<usize> = (1..=h.max(pol.prefix.len())).map(|t| pol.action_at(t)).collect();
        let v = value_policy(&inst, inst.prior(), &pol);
        let vh = value_finite_horizon(&inst, inst.prior(), &seq, h).unwrap();
        let gap = v - vh;
        prop_assert!(gap >= -1e-9, "gap {gap}");
        prop_assert!(gap <= eps + 1e-9, "gap {gap} > {eps}");
    }

    #[test]
    fn prefix_bounds_ordered_and_in_range(
        inst in instance(3, 3),
        raw in prop::collection::vec(0usize..3, 0..8),
    ) {
        let prefix: Vec<usize> = raw.iter().map(|k| k % inst.n_categories()).collect();
        let Ok(node) = prefix_bounds(&inst, &prefix) else { return Ok(()); };
        let ceiling = inst.p_max() / (1.0 - inst.p_max());
        prop_assert!(node.bounds.lower <= node.bounds.upper + 1e-12);
        prop_assert!(node.bounds.lower >= 0.0);
        prop_assert!(node.bounds.upper <= ceiling + 1e-9);
    }

    #[test]
    fn incremental_bounds_match_recomputation(
        inst in instance(3, 3),
        raw in prop::collection::vec(0usize..3, 1..8),
    ) {
        let prefix: Vec<usize> = raw.iter().map(|k| k % inst.n_categories()).collect();
        let Ok(node) = prefix_bounds(&inst, &prefix) else { return Ok(()); };
        // per-type survival products, no belief updates involved
        let q = inst.prior();
        let mut accumulated = 0.0;
        let mut survive = vec![1.0; q.len()];
        for &k in &prefix {
            for (m, s) in survive.iter_mut().enumerate() {
                *s *= inst.pref(k, m);
            }
            accumulated += (0..q.len()).map(|m| q[m] * survive[m]).sum::<f64>();
        }
        let discount: f64 = (0..q.len()).map(|m| q[m] * survive[m]).sum();
        let end = rec_apc::Belief::normalized(
            (0..q.len()).map(|m| q[m] * survive[m]).collect(),
        )
        .unwrap();
        let lower = accumulated + discount * lower_bound(&inst, &end).0;
        let upper = accumulated + discount * upper_bound(&inst, &end);
        prop_assert!((node.accumulated - accumulated).abs() < 1e-12);
        prop_assert!((node.discount - discount).abs() < 1e-12);
        prop_assert!((node.bounds.lower - lower).abs() < 1e-12 * (1.0 + lower));
        prop_assert!((node.bounds.upper - upper).abs() < 1e-12 * (1.0 + upper));
    }

    #[test]
    fn bounds_sandwich_dp_optimum(inst in instance(3, 3), start in common::belief(3, 0.01), h in 1usize..=12) {
        let start = if start.len() == inst.n_types() { start } else { inst.prior().clone() };
        prop_assume!(dp_state_count(inst.n_categories(), h) <= DP_STATE_BUDGET);
        let sol = solve_dp_from(&inst, &start, h).unwrap();
        let pm = inst.p_max();
        // V_H <= V* <= V_H + p_max^H * p_max / (1 - p_max)
        let tail = pm.powi(h as i32) * pm / (1.0 - pm);
        let (lo, _) = lower_bound(&inst, &start);
        let up = upper_bound(&inst, &start);
        prop_assert!(sol.value <= up + 1e-6);
        prop_assert!(lo <= sol.value + tail + 1e-6);
    }
}

#[test]
fn example1_values() {
    let inst = example1();
    let q = inst.prior();
    assert!((value_fixed(&inst, q, 0) - 9.5556).abs() < 1e-3);
    assert!((value_fixed(&inst, q, 1) - 4.0125).abs() < 5e-3);
    assert!((upper_bound(&inst, q) - 11.6316).abs() < 1e-4);
}
