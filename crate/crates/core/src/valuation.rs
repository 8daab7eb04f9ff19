//! Value functions of category sequences and the prefix bounds used by the
//! branch-and-bound search.
//!
//! The expected number of likes of a policy is evaluated per type as a
//! product-sum over the prefix plus the geometric tail of the repeated
//! category, then mixed by the belief. Bounds around the optimal value are
//! the best fixed category (attainable) and the full-information value
//! where every type is served its favourite category forever.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{dot, Belief, Instance, MIN_LIKELIHOOD};

/// Hard limit on horizons derived from a precision target.
pub const MAX_HORIZON: usize = 10_000_000;

/// A finite prefix followed by one category repeated forever.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Policy {
    pub prefix: Vec<usize>,
    pub tail: usize,
}

impl Policy {
    pub fn fixed(tail: usize) -> Self {
        Self {
            prefix: Vec::new(),
            tail,
        }
    }

    pub fn new(prefix: Vec<usize>, tail: usize) -> Self {
        Self { prefix, tail }
    }

    /// Category recommended at round `t` (1-based).
    pub fn action_at(&self, t: usize) -> usize {
        debug_assert!(t >= 1);
        self.prefix.get(t - 1).copied().unwrap_or(self.tail)
    }

    pub fn validate(&self, instance: &Instance) -> Result<()> {
        for &k in self.prefix.iter().chain(std::iter::once(&self.tail)) {
            instance.check_category(k)?;
        }
        Ok(())
    }
}

/// A lower/upper sandwich around an optimal value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundedValue {
    pub lower: f64,
    pub upper: f64,
}

impl BoundedValue {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Value of repeating category `k` forever: `sum_m b(m) P/(1-P)`.
pub fn value_fixed(instance: &Instance, belief: &Belief, k: usize) -> f64 {
    dot(belief.weights(), instance.ratio_row(k))
}

/// Exact value of a prefix-plus-tail policy from `belief`.
pub fn value_policy(instance: &Instance, belief: &Belief, policy: &Policy) -> f64 {
    (0..instance.n_types())
        .map(|m| belief[m] * type_value(instance, m, policy))
        .sum()
}

/// Expected likes of type `m` under `policy`: `sum_t prod_{j<=t} P(pi_j, m)`.
pub fn type_value(instance: &Instance, m: usize, policy: &Policy) -> f64 {
    let mut survive = 1.0;
    let mut total = 0.0;
    for &k in &policy.prefix {
        survive *= instance.pref(k, m);
        total += survive;
    }
    total + survive * instance.ratio_row(policy.tail)[m]
}

/// Expected likes when the session is cut after `horizon` rounds.
pub fn value_finite_horizon(
    instance: &Instance,
    belief: &Belief,
    prefix: &[usize],
    horizon: usize,
) -> Result<f64> {
    if prefix.len() < horizon {
        return Err(Error::InvalidArgument(format!(
            "prefix of length {} is shorter than horizon {horizon}",
            prefix.len()
        )));
    }
    let mut b = belief.clone();
    let mut discount = 1.0;
    let mut total = 0.0;
    for (t, &k) in prefix[..horizon].iter().enumerate() {
        instance.check_category(k)?;
        let p = instance.immediate_reward(&b, k);
        discount *= p;
        total += discount;
        if p <= MIN_LIKELIHOOD {
            break;
        }
        if t + 1 < horizon {
            b = instance.bayes_update(&b, k)?;
        }
    }
    Ok(total)
}

/// Rounds after which the tail of any policy is worth at most `epsilon`:
/// `ceil(log_{p_max}(epsilon (1 - p_max) / p_max))`, at least 1.
pub fn horizon_for_epsilon(instance: &Instance, epsilon: f64) -> Result<usize> {
    horizon_for(instance.p_max(), epsilon)
}

pub fn horizon_for(p_max: f64, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if p_max <= 0.0 {
        return Ok(1);
    }
    let h = (epsilon * (1.0 - p_max) / p_max).ln() / p_max.ln();
    let h = h.ceil();
    if h > MAX_HORIZON as f64 {
        return Err(Error::HorizonTooLarge {
            horizon: h,
            limit: MAX_HORIZON,
        });
    }
    Ok(if h < 1.0 { 1 } else { h as usize })
}

/// Full-information bound `sum_m b(m) max_k P/(1-P)`.
pub fn upper_bound(instance: &Instance, belief: &Belief) -> f64 {
    dot(belief.weights(), instance.best_ratios())
}

/// Best fixed-category value at `belief` and the category achieving it.
pub fn lower_bound(instance: &Instance, belief: &Belief) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..instance.n_categories() {
        let v = value_fixed(instance, belief, k);
        if v > best.0 {
            best = (v, k);
        }
    }
    best
}

/// Bounds of a prefix together with the state needed to extend it by one
/// category without replaying the walk.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixBounds {
    pub bounds: BoundedValue,
    /// Expected likes collected inside the prefix.
    pub accumulated: f64,
    /// Probability of surviving the whole prefix.
    pub discount: f64,
    pub end_belief: Belief,
    /// Best fixed category at `end_belief`.
    pub tail: usize,
    pub depth: usize,
}

impl PrefixBounds {
    /// Bounds of the empty prefix at `start`.
    pub fn root(instance: &Instance, start: &Belief) -> Self {
        let (lower, tail) = lower_bound(instance, start);
        Self {
            bounds: BoundedValue {
                lower,
                upper: upper_bound(instance, start),
            },
            accumulated: 0.0,
            discount: 1.0,
            end_belief: start.clone(),
            tail,
            depth: 0,
        }
    }

    /// Bounds of this prefix followed by category `k`.
    pub fn extend(&self, instance: &Instance, k: usize) -> Result<Self> {
        let p = instance.immediate_reward(&self.end_belief, k);
        if p <= MIN_LIKELIHOOD {
            return Err(Error::ZeroLikelihood { category: k });
        }
        let end_belief = instance.bayes_update(&self.end_belief, k)?;
        let discount = self.discount * p;
        let accumulated = self.accumulated + discount;
        let (tail_lower, tail) = lower_bound(instance, &end_belief);
        let tail_upper = upper_bound(instance, &end_belief);
        Ok(Self {
            bounds: BoundedValue {
                lower: accumulated + discount * tail_lower,
                upper: accumulated + discount * tail_upper,
            },
            accumulated,
            discount,
            end_belief,
            tail,
            depth: self.depth + 1,
        })
    }

    /// Upper bound of this prefix followed by `k`, or `None` when a like on
    /// `k` is impossible (the child is then worth exactly `accumulated`).
    pub fn child_upper(&self, instance: &Instance, k: usize) -> Option<f64> {
        let p = instance.immediate_reward(&self.end_belief, k);
        if p <= MIN_LIKELIHOOD {
            return None;
        }
        let discount = self.discount * p;
        // upper bound after the update: sum_m b(m) P(k,m) u_m / p
        let row = instance.row(k);
        let tail: f64 = self
            .end_belief
            .weights()
            .iter()
            .zip(row)
            .zip(instance.best_ratios())
            .map(|((b, pk), u)| b * pk * u)
            .sum::<f64>()
            / p;
        Some(self.accumulated + discount + discount * tail)
    }
}

/// Bounds of `prefix` walked from the prior.
pub fn prefix_bounds(instance: &Instance, prefix: &[usize]) -> Result<PrefixBounds> {
    prefix_bounds_from(instance, instance.prior(), prefix)
}

pub fn prefix_bounds_from(
    instance: &Instance,
    start: &Belief,
    prefix: &[usize],
) -> Result<PrefixBounds> {
    instance.check_belief(start)?;
    let mut node = PrefixBounds::root(instance, start);
    for &k in prefix {
        instance.check_category(k)?;
        node = node.extend(instance, k)?;
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> Instance {
        Instance::from_matrix(vec![vec![0.95, 0.1], vec![0.79, 0.81]], vec![0.5, 0.5]).unwrap()
    }

    fn prop2(d: f64) -> Instance {
        let a = 8.0 * d / (1.0 + 8.0 * d);
        Instance::from_matrix(vec![vec![a, 0.0], vec![0.8, 0.8]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn fixed_values_example1() {
        let inst = example1();
        let q = inst.prior();
        assert!((value_fixed(&inst, q, 1) - 4.01).abs() < 0.005);
        let exact_k1 = 0.5 * 19.0 + 0.5 / 9.0;
        assert!((value_fixed(&inst, q, 0) - exact_k1).abs() < 1e-12);
        assert!((value_fixed(&inst, q, 0) - 9.5556).abs() < 1e-3);
        let single = Instance::from_matrix(vec![vec![0.5]], vec![1.0]).unwrap();
        assert!((value_fixed(&single, single.prior(), 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn policy_value_collapses_to_fixed() {
        let inst = example1();
        for k in 0..2 {
            let v = value_policy(&inst, inst.prior(), &Policy::fixed(k));
            assert!((v - value_fixed(&inst, inst.prior(), k)).abs() < 1e-12);
        }
    }

    #[test]
    fn myopic_gap_family() {
        let inst = prop2(10.0);
        let v1 = value_policy(&inst, inst.prior(), &Policy::fixed(0));
        let v2 = value_policy(&inst, inst.prior(), &Policy::fixed(1));
        assert!((v1 - 40.0).abs() < 1e-6, "{v1}");
        assert!((v2 - 4.0).abs() < 1e-9, "{v2}");
        let (lo, k) = lower_bound(&inst, inst.prior());
        assert_eq!(k, 0);
        assert!((lo - 40.0).abs() < 1e-6);
    }

    #[test]
    fn finite_horizon_example() {
        let inst = example1();
        let q = inst.prior();
        let h1 = value_finite_horizon(&inst, q, &[1, 0], 1).unwrap();
        assert_eq!(h1, inst.immediate_reward(q, 1));
        // tau(q, k2) = (0.49375, 0.50625); p_k2 there = 0.8005
        let v = value_finite_horizon(&inst, q, &[1, 1], 2).unwrap();
        let b2 = 0.49375 * 0.79 + 0.50625 * 0.81;
        assert!((v - (0.8 + 0.8 * b2)).abs() < 1e-12);
        assert!((v - 1.440).abs() < 1e-3);
        assert!(value_finite_horizon(&inst, q, &[1], 2).is_err());
    }

    #[test]
    fn finite_horizon_matches_zero_tail_policy() {
        // third category likes nothing, so it ends every session
        let inst = Instance::from_matrix(
            vec![vec![0.95, 0.1], vec![0.79, 0.81], vec![0.0, 0.0]],
            vec![0.5, 0.5],
        )
        .unwrap();
        let prefix = [0, 1, 1, 0, 1];
        let a = value_finite_horizon(&inst, inst.prior(), &prefix, prefix.len()).unwrap();
        let b = value_policy(&inst, inst.prior(), &Policy::new(prefix.to_vec(), 2));
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(horizon_for(0.8, 0.01).unwrap(), 27);
        assert_eq!(horizon_for(0.95, 1e-6).unwrap(), 327);
        assert_eq!(horizon_for(0.8, 4.0).unwrap(), 1);
        assert_eq!(horizon_for(0.8, 100.0).unwrap(), 1);
        assert!(horizon_for(0.8, 0.0).is_err());
        assert!(matches!(
            horizon_for(1.0 - 1e-12, 1e-9),
            Err(Error::HorizonTooLarge { .. })
        ));
    }

    #[test]
    fn bounds_example1() {
        let inst = example1();
        let q = inst.prior();
        let up = upper_bound(&inst, q);
        assert!((up - (0.5 * 19.0 + 0.5 * 0.81 / 0.19)).abs() < 1e-12);
        assert!((up - 11.6316).abs() < 1e-3);
        let (lo, k) = lower_bound(&inst, q);
        assert_eq!(k, 0);
        assert!((lo - 9.5556).abs() < 1e-3);
        let single = Instance::from_matrix(vec![vec![0.3], vec![0.6]], vec![1.0]).unwrap();
        assert!(
            (upper_bound(&single, single.prior()) - value_fixed(&single, single.prior(), 1)).abs()
                < 1e-15
        );
    }

    #[test]
    fn prefix_bounds_example1() {
        let inst = example1();
        let root = prefix_bounds(&inst, &[]).unwrap();
        assert!((root.bounds.lower - 9.5556).abs() < 1e-3);
        assert!((root.bounds.upper - 11.6316).abs() < 1e-3);
        let one = prefix_bounds(&inst, &[0]).unwrap();
        let b = inst.bayes_update(inst.prior(), 0).unwrap();
        let expect = 0.525 * (1.0 + lower_bound(&inst, &b).0);
        assert!((one.bounds.lower - expect).abs() < 1e-12);
    }

    #[test]
    fn child_upper_matches_extension() {
        let inst = example1();
        let root = PrefixBounds::root(&inst, inst.prior());
        for k in 0..2 {
            let fast = root.child_upper(&inst, k).unwrap();
            let full = root.extend(&inst, k).unwrap().bounds.upper;
            assert!((fast - full).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_closes_at_horizon() {
        let inst = example1();
        let eps = 1e-3;
        let h = horizon_for_epsilon(&inst, eps).unwrap();
        for prefix in [vec![1; h], vec![0; h]] {
            let node = prefix_bounds(&inst, &prefix).unwrap();
            assert!(node.bounds.gap() <= eps, "{:?}", node.bounds);
        }
    }
}
