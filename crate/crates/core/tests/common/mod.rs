//! Shared strategies and oracles for the integration suites.
#![allow(dead_code)]

use proptest::prelude::*;
use rec_apc::{Belief, Instance};

/// Instances with `1..=max_k` categories, `1..=max_m` types, entries in
/// `[0, 0.97]` and a strictly positive prior.
pub fn instance(max_k: usize, max_m: usize) -> impl Strategy<Value = Instance> {
    (1..=max_k, 1..=max_m).prop_flat_map(|(k, m)| sized_instance(k, m))
}

pub fn sized_instance(k: usize, m: usize) -> impl Strategy<Value = Instance> {
    (
        prop::collection::vec(prop::collection::vec(0.0f64..0.97, m), k),
        prop::collection::vec(0.05f64..1.0, m),
    )
        .prop_map(|(p, w)| {
            let total: f64 = w.iter().sum();
            Instance::from_matrix(p, w.iter().map(|x| x / total).collect()).unwrap()
        })
}

/// A belief over `m` types with every entry at least `floor`.
pub fn belief(m: usize, floor: f64) -> impl Strategy<Value = Belief> {
    prop::collection::vec(floor..1.0, m).prop_map(|w| Belief::normalized(w).unwrap())
}

/// Bayes update written out directly from its definition.
pub fn oracle_update(instance: &Instance, b: &Belief, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..b.len()).map(|m| b[m] * instance.pref(k, m)).collect();
    let z: f64 = raw.iter().sum();
    raw.iter().map(|x| x / z).collect()
}

/// Value of a prefix-then-tail policy by summing survival probabilities per
/// type until the remaining mass is negligible.
pub fn oracle_value(instance: &Instance, b: &Belief, prefix: &[usize], tail: usize) -> f64 {
    let mut total = 0.0;
    for m in 0..b.len() {
        let mut survive = 1.0;
        let mut t = 0;
        loop {
            let k = prefix.get(t).copied().unwrap_or(tail);
            survive *= instance.pref(k, m);
            total += b[m] * survive;
            t += 1;
            if t >= prefix.len() && survive < 1e-16 {
                break;
            }
        }
    }
    total
}

pub fn example1() -> Instance {
    Instance::from_matrix(vec![vec![0.95, 0.1], vec![0.79, 0.81]], vec![0.5, 0.5]).unwrap()
}
