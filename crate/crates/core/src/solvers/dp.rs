//! Exact finite-horizon optimum by backward induction over category
//! multisets.
//!
//! The belief after a run of likes depends only on how many times each
//! category was shown, so the states of layer `t` are the count vectors
//! summing to `t`. Layer `t` holds `C(t + K - 1, K - 1)` states, ranked in
//! lexicographic order of the count vector.

use crate::error::{Error, Result};
use crate::model::{Belief, Instance};
use crate::valuation::value_finite_horizon;

/// Largest `C(H + K, K)` accepted by [`solve_dp`].
pub const DP_STATE_BUDGET: f64 = 5e6;

/// Optimal value over length-`H` sequences and a sequence achieving it.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSolution {
    pub value: f64,
    pub prefix: Vec<usize>,
}

/// `C(H + K, K)`, the state-count measure the budget is checked against.
pub fn dp_state_count(n_categories: usize, horizon: usize) -> f64 {
    let mut c = 1.0f64;
    for i in 1..=n_categories {
        c = c * (horizon + i) as f64 / i as f64;
    }
    c
}

pub fn solve_dp(instance: &Instance, horizon: usize) -> Result<HorizonSolution> {
    solve_dp_from(instance, instance.prior(), horizon)
}

pub fn solve_dp_from(
    instance: &Instance,
    start: &Belief,
    horizon: usize,
) -> Result<HorizonSolution> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    instance.check_belief(start)?;
    let n_cat = instance.n_categories();
    let states = dp_state_count(n_cat, horizon);
    if states > DP_STATE_BUDGET {
        return Err(Error::StateBudgetExceeded {
            states,
            budget: DP_STATE_BUDGET,
        });
    }
    if n_cat == 1 {
        let prefix = vec![0; horizon];
        let value = value_finite_horizon(instance, start, &prefix, horizon)?;
        return Ok(HorizonSolution { value, prefix });
    }

    let n_types = instance.n_types();
    let ranks = Ranker::new(n_cat, horizon);
    let log_prior: Vec<f64> = start.weights().iter().map(|w| w.ln()).collect();
    let pref: Vec<f64> = (0..n_cat).flat_map(|k| instance.row(k).to_vec()).collect();
    let log_pref: Vec<f64> = pref.iter().map(|p| p.ln()).collect();

    let mut policy: Vec<Vec<u16>> = vec![Vec::new(); horizon];
    let mut next_values: Vec<f64> = Vec::new();
    let mut counts = vec![0usize; n_cat];
    let mut log_w = vec![0.0; n_types];
    let mut rewards = vec![0.0; n_cat];

    for t in (0..horizon).rev() {
        let size = ranks.layer_size(t);
        let mut values = vec![0.0; size];
        let mut actions = vec![0u16; size];
        first_composition(&mut counts, t);
        for rank in 0..size {
            debug_assert_eq!(ranks.rank(&counts), rank);
            let tables = (&log_prior[..], &pref[..], &log_pref[..]);
            if state_rewards(&counts, tables, &mut log_w, &mut rewards) {
                let mut best = f64::NEG_INFINITY;
                let mut best_k = 0;
                for k in 0..n_cat {
                    let future = if t + 1 < horizon {
                        counts[k] += 1;
                        let v = next_values[ranks.rank(&counts)];
                        counts[k] -= 1;
                        v
                    } else {
                        0.0
                    };
                    let v = rewards[k] * (1.0 + future);
                    if v > best {
                        best = v;
                        best_k = k;
                    }
                }
                values[rank] = best;
                actions[rank] = best_k as u16;
            }
            next_composition(&mut counts);
        }
        policy[t] = actions;
        next_values = values;
    }

    let value = next_values[0];
    let mut prefix = Vec::with_capacity(horizon);
    counts.iter_mut().for_each(|c| *c = 0);
    for layer in &policy {
        let k = layer[ranks.rank(&counts)] as usize;
        prefix.push(k);
        counts[k] += 1;
    }
    Ok(HorizonSolution { value, prefix })
}

/// Immediate rewards at the belief reached by `counts`. Returns false when
/// the state has probability zero of being reached.
fn state_rewards(
    counts: &[usize],
    (log_prior, pref, log_pref): (&[f64], &[f64], &[f64]),
    log_w: &mut [f64],
    rewards: &mut [f64],
) -> bool {
    let n_types = log_prior.len();
    let mut top = f64::NEG_INFINITY;
    for m in 0..n_types {
        let mut lw = log_prior[m];
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                lw += c as f64 * log_pref[k * n_types + m];
            }
        }
        log_w[m] = lw;
        top = top.max(lw);
    }
    if top == f64::NEG_INFINITY {
        return false;
    }
    let mut total = 0.0;
    for w in log_w.iter_mut() {
        *w = (*w - top).exp();
        total += *w;
    }
    for w in log_w.iter_mut() {
        *w /= total;
    }
    for (k, r) in rewards.iter_mut().enumerate() {
        *r = pref[k * n_types..(k + 1) * n_types]
            .iter()
            .zip(log_w.iter())
            .map(|(p, b)| p * b)
            .sum();
    }
    true
}

fn first_composition(counts: &mut [usize], total: usize) {
    counts.iter_mut().for_each(|c| *c = 0);
    if let Some(last) = counts.last_mut() {
        *last = total;
    }
}

/// Lexicographic successor among count vectors with the same sum.
fn next_composition(counts: &mut [usize]) {
    let n = counts.len();
    let mut tail = counts[n - 1];
    for i in (0..n - 1).rev() {
        if tail > 0 {
            counts[i] += 1;
            for c in &mut counts[i + 1..] {
                *c = 0;
            }
            counts[n - 1] = tail - 1;
            return;
        }
        tail += counts[i];
    }
}

/// Lexicographic ranks of count vectors via binomial sums.
struct Ranker {
    parts: usize,
    /// `binom[n][j]` for `j <= parts`.
    binom: Vec<Vec<u64>>,
}

impl Ranker {
    fn new(parts: usize, horizon: usize) -> Self {
        let rows = horizon + parts + 1;
        let mut binom = vec![vec![0u64; parts + 1]; rows];
        for n in 0..rows {
            binom[n][0] = 1;
            for j in 1..=parts.min(n) {
                binom[n][j] = binom[n - 1][j - 1].saturating_add(binom[n - 1][j]);
            }
        }
        Self { parts, binom }
    }

    /// Number of ways to split `total` into `parts` ordered nonnegative counts.
    fn compositions(&self, total: usize, parts: usize) -> u64 {
        if parts == 0 {
            return u64::from(total == 0);
        }
        self.binom[total + parts - 1][parts - 1]
    }

    fn layer_size(&self, total: usize) -> usize {
        self.compositions(total, self.parts) as usize
    }

    fn rank(&self, counts: &[usize]) -> usize {
        let mut remaining: usize = counts.iter().sum();
        let mut rank = 0u64;
        for (i, &c) in counts[..self.parts - 1].iter().enumerate() {
            let rest = self.parts - i - 1;
            // vectors with a smaller entry at position i
            rank += self.compositions_upto(remaining, rest)
                - self.compositions_upto(remaining - c, rest);
            remaining -= c;
        }
        rank as usize
    }

    /// Number of vectors of `parts` counts with sum at most `total`,
    /// `C(total + parts, parts)`.
    fn compositions_upto(&self, total: usize, parts: usize) -> u64 {
        self.binom[total + parts][parts]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_follow_enumeration_order() {
        for parts in 2..=4 {
            let ranks = Ranker::new(parts, 7);
            for total in 0..7 {
                let mut counts = vec![0; parts];
                first_composition(&mut counts, total);
                let size = ranks.layer_size(total);
                let mut seen = Vec::new();
                for r in 0..size {
                    assert_eq!(counts.iter().sum::<usize>(), total);
                    assert_eq!(ranks.rank(&counts), r, "{counts:?}");
                    seen.push(counts.clone());
                    next_composition(&mut counts);
                }
                let mut sorted = seen.clone();
                sorted.sort();
                sorted.dedup();
                assert_eq!(sorted, seen);
            }
        }
    }

    #[test]
    fn state_count_measure() {
        assert_eq!(dp_state_count(3, 3), 20.0);
        assert_eq!(dp_state_count(2, 10), 66.0);
    }

    #[test]
    fn one_step_is_greedy() {
        let inst =
            Instance::from_matrix(vec![vec![0.95, 0.1], vec![0.79, 0.81]], vec![0.5, 0.5]).unwrap();
        let sol = solve_dp(&inst, 1).unwrap();
        assert!((sol.value - 0.8).abs() < 1e-12);
        assert_eq!(sol.prefix, vec![1]);
    }

    #[test]
    fn budget_guard() {
        let inst = Instance::from_matrix(
            vec![vec![0.5, 0.2], vec![0.3, 0.4], vec![0.1, 0.9], vec![0.6, 0.6]],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert!(matches!(
            solve_dp(&inst, 200),
            Err(Error::StateBudgetExceeded { .. })
        ));
    }
}
