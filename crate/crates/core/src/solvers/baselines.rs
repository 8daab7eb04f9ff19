//! Exhaustive enumeration and the two heuristic policies: myopic (greedy on
//! the immediate reward) and best fixed action.

use crate::error::{Error, Result};
use crate::model::{argmax, Belief, Instance};
use crate::solvers::dp::HorizonSolution;
use crate::valuation::lower_bound;

/// Largest `K^H` accepted by [`solve_bruteforce`].
pub const BRUTE_FORCE_BUDGET: f64 = 1e7;

/// Maximum of the `H`-round value over every length-`H` sequence. Among
/// equal values the lexicographically first sequence is kept.
pub fn solve_bruteforce(instance: &Instance, horizon: usize) -> Result<HorizonSolution> {
    solve_bruteforce_from(instance, instance.prior(), horizon)
}

pub fn solve_bruteforce_from(
    instance: &Instance,
    start: &Belief,
    horizon: usize,
) -> Result<HorizonSolution> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    instance.check_belief(start)?;
    let sequences = (instance.n_categories() as f64).powi(horizon as i32);
    if sequences > BRUTE_FORCE_BUDGET {
        return Err(Error::BruteForceBudgetExceeded {
            sequences,
            budget: BRUTE_FORCE_BUDGET,
        });
    }
    let mut best = HorizonSolution {
        value: f64::NEG_INFINITY,
        prefix: Vec::new(),
    };
    let mut stack = Vec::with_capacity(horizon);
    enumerate(instance, start, 1.0, 0.0, horizon, &mut stack, &mut best)?;
    Ok(best)
}

fn enumerate(
    instance: &Instance,
    belief: &Belief,
    discount: f64,
    accumulated: f64,
    remaining: usize,
    stack: &mut Vec<usize>,
    best: &mut HorizonSolution,
) -> Result<()> {
    for k in 0..instance.n_categories() {
        let p = instance.immediate_reward(belief, k);
        let d = discount * p;
        let acc = accumulated + d;
        stack.push(k);
        if remaining == 1 || d == 0.0 {
            // a zero-probability branch collects nothing more; pad with the
            // first category so the sequence has full length
            if acc > best.value {
                best.value = acc;
                best.prefix.clear();
                best.prefix.extend_from_slice(stack);
                best.prefix.resize(stack.len() + remaining - 1, 0);
            }
        } else {
            let next = instance.bayes_update(belief, k)?;
            enumerate(instance, &next, d, acc, remaining - 1, stack, best)?;
        }
        stack.pop();
    }
    Ok(())
}

/// Greedy sequence: the category with the highest immediate reward at the
/// current belief, then a Bayesian update.
pub fn policy_myopic(instance: &Instance, start: &Belief, steps: usize) -> Result<Vec<usize>> {
    instance.check_belief(start)?;
    let mut belief = start.clone();
    let mut out = Vec::with_capacity(steps);
    let mut rewards = vec![0.0; instance.n_categories()];
    for t in 0..steps {
        for (k, r) in rewards.iter_mut().enumerate() {
            *r = instance.immediate_reward(&belief, k);
        }
        let k = argmax(&rewards);
        out.push(k);
        if t + 1 < steps {
            belief = instance.bayes_update(&belief, k)?;
        }
    }
    Ok(out)
}

/// Category whose constant policy has the highest value at `start`.
pub fn policy_bfa(instance: &Instance, start: &Belief) -> usize {
    lower_bound(instance, start).1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> Instance {
        Instance::from_matrix(vec![vec![0.95, 0.1], vec![0.79, 0.81]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn brute_force_example1() {
        let inst = example1();
        // three rounds are too few for the k1 tail to pay off
        let sol = solve_bruteforce(&inst, 3).unwrap();
        assert_eq!(sol.prefix, vec![1, 1, 1]);
        let direct = crate::valuation::value_finite_horizon(&inst, inst.prior(), &sol.prefix, 3);
        assert!((sol.value - direct.unwrap()).abs() < 1e-15);
        let one = solve_bruteforce(&inst, 1).unwrap();
        assert_eq!(one.prefix, vec![1]);
        assert!((one.value - 0.8).abs() < 1e-15);
    }

    #[test]
    fn brute_force_budget() {
        let inst = example1();
        assert!(matches!(
            solve_bruteforce(&inst, 30),
            Err(Error::BruteForceBudgetExceeded { .. })
        ));
    }

    #[test]
    fn myopic_example1() {
        let inst = example1();
        assert_eq!(policy_myopic(&inst, inst.prior(), 5).unwrap(), vec![1; 5]);
        let v = Belief::vertex(2, 0);
        assert_eq!(policy_myopic(&inst, &v, 4).unwrap(), vec![0; 4]);
    }

    #[test]
    fn bfa_example1() {
        let inst = example1();
        assert_eq!(policy_bfa(&inst, inst.prior()), 0);
        let single = Instance::from_matrix(vec![vec![0.2, 0.7]], vec![0.4, 0.6]).unwrap();
        assert_eq!(policy_bfa(&single, single.prior()), 0);
    }
}
