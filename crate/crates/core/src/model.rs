//! Problem definition, beliefs over user types, Bayesian updates after a
//! like, and belief walks.
//!
//! An [`Instance`] holds the category-by-type like-probability matrix and the
//! prior over types. Rows are categories and columns are types; every loader
//! keeps that orientation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating that a distribution sums to one.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Tolerance accepted on the prior of a loaded document.
pub const DOCUMENT_PRIOR_TOL: f64 = 1e-6;

/// Denominators at or below this are treated as an impossible like.
pub const MIN_LIKELIHOOD: f64 = 1e-300;

/// On-disk JSON shape of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub categories: Vec<String>,
    pub types: Vec<String>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

/// A validated problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    categories: Vec<String>,
    types: Vec<String>,
    /// Row-major, `categories.len() x types.len()`.
    prefs: Vec<f64>,
    prior: Belief,
    p_max: f64,
    /// `P / (1 - P)`, same layout as `prefs`.
    ratios: Vec<f64>,
    /// Per type, the largest ratio over categories.
    best_ratios: Vec<f64>,
}

impl Instance {
    /// Validates a matrix and prior. Types with zero prior mass are dropped
    /// and the prior is renormalized over the remaining types.
    pub fn new(
        categories: Vec<String>,
        types: Vec<String>,
        prefs: Vec<Vec<f64>>,
        prior: Vec<f64>,
    ) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::Malformed("no categories".into()));
        }
        if types.is_empty() {
            return Err(Error::Malformed("no types".into()));
        }
        check_unique("category", &categories)?;
        check_unique("type", &types)?;
        if prefs.len() != categories.len() {
            return Err(Error::DimensionMismatch(format!(
                "P has {} rows, expected one per category ({})",
                prefs.len(),
                categories.len()
            )));
        }
        for (k, row) in prefs.iter().enumerate() {
            if row.len() != types.len() {
                return Err(Error::DimensionMismatch(format!(
                    "P row {k} has {} entries, expected one per type ({})",
                    row.len(),
                    types.len()
                )));
            }
            for (m, &v) in row.iter().enumerate() {
                check_probability(|| format!("P[{k}][{m}]"), v)?;
            }
        }
        if prior.len() != types.len() {
            return Err(Error::DimensionMismatch(format!(
                "q has {} entries, expected one per type ({})",
                prior.len(),
                types.len()
            )));
        }
        for (m, &v) in prior.iter().enumerate() {
            check_probability(|| format!("q[{m}]"), v)?;
        }
        let sum: f64 = prior.iter().sum();
        if (sum - 1.0).abs() > DOCUMENT_PRIOR_TOL {
            return Err(Error::PriorNotNormalized { sum });
        }

        let keep: Vec<usize> = (0..types.len()).filter(|&m| prior[m] > 0.0).collect();
        let types: Vec<String> = keep.iter().map(|&m| types[m].clone()).collect();
        let kept_prior: Vec<f64> = keep.iter().map(|&m| prior[m]).collect();
        let mut flat = Vec::with_capacity(categories.len() * keep.len());
        for row in &prefs {
            flat.extend(keep.iter().map(|&m| row[m]));
        }
        let p_max = flat.iter().copied().fold(0.0, f64::max);
        if p_max >= 1.0 {
            return Err(Error::InfiniteWelfare { p_max });
        }
        let n_types = types.len();
        let ratios: Vec<f64> = flat.iter().map(|p| p / (1.0 - p)).collect();
        let best_ratios = (0..n_types)
            .map(|m| {
                (0..categories.len())
                    .map(|k| ratios[k * n_types + m])
                    .fold(0.0, f64::max)
            })
            .collect();
        Ok(Self {
            categories,
            types,
            prefs: flat,
            prior: Belief::normalized(kept_prior)?,
            p_max,
            ratios,
            best_ratios,
        })
    }

    /// Instance with generated names `k1..kK` and `m1..mM`.
    pub fn from_matrix(prefs: Vec<Vec<f64>>, prior: Vec<f64>) -> Result<Self> {
        let categories = (1..=prefs.len()).map(|i| format!("k{i}")).collect();
        let types = (1..=prior.len()).map(|i| format!("m{i}")).collect();
        Self::new(categories, types, prefs, prior)
    }

    pub fn from_document(doc: InstanceDocument) -> Result<Self> {
        Self::new(doc.categories, doc.types, doc.p, doc.q)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InstanceDocument =
            serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_document(&self) -> InstanceDocument {
        InstanceDocument {
            categories: self.categories.clone(),
            types: self.types.clone(),
            p: (0..self.n_categories()).map(|k| self.row(k).to_vec()).collect(),
            q: self.prior.weights().to_vec(),
        }
    }

    /// Pretty-printed canonical JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("instance serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn n_types(&self) -> usize {
        self.types.len()
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn types(&self) -> &[String] {
        &self.types
    }

    /// Like-probability of category `k` for type `m`.
    #[inline]
    pub fn pref(&self, k: usize, m: usize) -> f64 {
        self.prefs[k * self.types.len() + m]
    }

    /// Row of like-probabilities for category `k`, indexed by type.
    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.types.len();
        &self.prefs[k * n..(k + 1) * n]
    }

    /// Row of `P(k, m) / (1 - P(k, m))`: expected likes of type `m` under
    /// the constant policy `k`.
    #[inline]
    pub fn ratio_row(&self, k: usize) -> &[f64] {
        let n = self.types.len();
        &self.ratios[k * n..(k + 1) * n]
    }

    /// Per type, `max_k P(k, m) / (1 - P(k, m))`.
    #[inline]
    pub fn best_ratios(&self) -> &[f64] {
        &self.best_ratios
    }

    pub fn prior(&self) -> &Belief {
        &self.prior
    }

    /// Largest entry of the preference matrix.
    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t == name)
    }

    /// Resolves a category given either by name or by zero-based index.
    pub fn resolve_category(&self, token: &str) -> Result<usize> {
        if let Some(k) = self.category_index(token) {
            return Ok(k);
        }
        match token.parse::<usize>() {
            Ok(k) if k < self.n_categories() => Ok(k),
            _ => Err(Error::UnknownId {
                what: "category",
                id: token.to_string(),
            }),
        }
    }

    pub fn check_category(&self, k: usize) -> Result<()> {
        if k < self.n_categories() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                what: "category",
                index: k,
                len: self.n_categories(),
            })
        }
    }

    pub fn check_belief(&self, belief: &Belief) -> Result<()> {
        if belief.len() == self.n_types() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "belief has {} entries, instance has {} types",
                belief.len(),
                self.n_types()
            )))
        }
    }

    /// Expected immediate reward `p_k(b) = sum_m b(m) P(k, m)`.
    #[inline]
    pub fn immediate_reward(&self, belief: &Belief, k: usize) -> f64 {
        dot(belief.weights(), self.row(k))
    }

    /// Posterior over types after a like on category `k`.
    pub fn bayes_update(&self, belief: &Belief, k: usize) -> Result<Belief> {
        let row = self.row(k);
        let denom = dot(belief.weights(), row);
        if !(denom > MIN_LIKELIHOOD) {
            return Err(Error::ZeroLikelihood { category: k });
        }
        let weights: Vec<f64> = belief
            .weights()
            .iter()
            .zip(row)
            .map(|(b, p)| b * p / denom)
            .collect();
        Ok(Belief::renormalize(weights))
    }

    /// Belief walk of `prefix` from `start`.
    pub fn walk(&self, prefix: &[usize], start: &Belief) -> Result<BeliefWalk> {
        if prefix.is_empty() {
            return Err(Error::InvalidArgument("walk needs a nonempty prefix".into()));
        }
        self.check_belief(start)?;
        let mut steps = Vec::with_capacity(prefix.len());
        let mut belief = start.clone();
        for &k in prefix {
            self.check_category(k)?;
            let reward = self.immediate_reward(&belief, k);
            let next = self.bayes_update(&belief, k)?;
            steps.push(WalkStep {
                belief,
                category: k,
                reward,
            });
            belief = next;
        }
        Ok(BeliefWalk {
            steps,
            end_belief: belief,
        })
    }
}

/// Free-function form of [`Instance::immediate_reward`].
pub fn immediate_reward(instance: &Instance, belief: &Belief, k: usize) -> f64 {
    instance.immediate_reward(belief, k)
}

/// Free-function form of [`Instance::bayes_update`].
pub fn bayes_update(instance: &Instance, belief: &Belief, k: usize) -> Result<Belief> {
    instance.bayes_update(belief, k)
}

/// Free-function form of [`Instance::walk`].
pub fn walk(instance: &Instance, prefix: &[usize], start: &Belief) -> Result<BeliefWalk> {
    instance.walk(prefix, start)
}

/// A point in the type simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    weights: Vec<f64>,
}

impl Belief {
    /// Validates that `weights` is a distribution (within [`SIMPLEX_TOL`])
    /// and renormalizes it.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidBelief("empty".into()));
        }
        if weights
            .iter()
            .any(|w| !w.is_finite() || *w < 0.0 || *w > 1.0)
        {
            return Err(Error::InvalidBelief(format!("entries must lie in [0, 1]: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidBelief(format!("sums to {sum}")));
        }
        Ok(Self::renormalize(weights))
    }

    /// Scales nonnegative weights with positive total mass onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidBelief(format!("bad weights {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidBelief("zero total mass".into()));
        }
        Ok(Self::renormalize(weights))
    }

    fn renormalize(mut weights: Vec<f64>) -> Self {
        let sum: f64 = weights.iter().sum();
        // leave rounding-level error alone so saved beliefs reload unchanged
        if (sum - 1.0).abs() <= 1e-15 {
            return Self { weights };
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self { weights }
    }

    /// Point mass on type `m`.
    pub fn vertex(n_types: usize, m: usize) -> Self {
        let mut weights = vec![0.0; n_types];
        weights[m] = 1.0;
        Self { weights }
    }

    pub fn uniform(n_types: usize) -> Self {
        Self {
            weights: vec![1.0 / n_types as f64; n_types],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Type with the most mass (lowest index on ties).
    pub fn mode(&self) -> usize {
        argmax(&self.weights)
    }

    pub fn l1_distance(&self, other: &Belief) -> f64 {
        self.weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// `||b - e_m||_1`.
    pub fn distance_to_vertex(&self, m: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| if i == m { (1.0 - w).abs() } else { w.abs() })
            .sum()
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;

    fn index(&self, m: usize) -> &f64 {
        &self.weights[m]
    }
}

impl fmt::Display for Belief {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, w) in self.weights.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{w:.6}")?;
        }
        write!(f, ")")
    }
}

/// One round of a belief walk.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkStep {
    pub belief: Belief,
    pub category: usize,
    /// `p_k(b)` at this step's belief.
    pub reward: f64,
}

/// Beliefs visited by a category sequence under repeated likes.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefWalk {
    pub steps: Vec<WalkStep>,
    /// Belief after a like on the last category.
    pub end_belief: Belief,
}

impl BeliefWalk {
    /// Expected number of likes collected over the walk.
    pub fn truncated_value(&self) -> f64 {
        let mut discount = 1.0;
        let mut total = 0.0;
        for step in &self.steps {
            discount *= step.reward;
            total += discount;
        }
        total
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest value; lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn check_probability(what: impl FnOnce() -> String, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Malformed(format!("{} is not finite", what())));
    }
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::ProbabilityOutOfRange {
            what: what(),
            value,
        });
    }
    Ok(())
}

fn check_unique(what: &str, names: &[String]) -> Result<()> {
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::Malformed(format!("duplicate {what} name `{a}`")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> Instance {
        Instance::from_matrix(vec![vec![0.95, 0.1], vec![0.79, 0.81]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn loads_example_document() {
        let text = r#"{"categories":["k1","k2"],"types":["m1","m2"],
            "P":[[0.95,0.1],[0.79,0.81]],"q":[0.5,0.5]}"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.p_max(), 0.95);
        assert_eq!(inst.n_categories(), 2);
        assert_eq!(inst.types(), ["m1", "m2"]);
    }

    #[test]
    fn strips_zero_prior_types() {
        let text = r#"{"categories":["a"],"types":["x","y"],"P":[[0.3,0.7]],"q":[1.0,0.0]}"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.n_types(), 1);
        assert_eq!(inst.prior().weights(), [1.0]);
        assert_eq!(inst.row(0), [0.3]);
        assert_eq!(inst.p_max(), 0.3);
    }

    #[test]
    fn rejects_certain_like() {
        let text = r#"{"categories":["a"],"types":["x","y"],"P":[[1.0,0.2]],"q":[0.5,0.5]}"#;
        assert!(matches!(
            Instance::from_json(text),
            Err(Error::InfiniteWelfare { .. })
        ));
    }

    #[test]
    fn rejects_malformed_documents() {
        let unknown = r#"{"categories":["a"],"types":["x"],"P":[[0.2]],"q":[1.0],"extra":1}"#;
        assert!(matches!(Instance::from_json(unknown), Err(Error::Malformed(_))));
        let short_row = r#"{"categories":["a"],"types":["x","y"],"P":[[0.2]],"q":[0.5,0.5]}"#;
        assert!(matches!(
            Instance::from_json(short_row),
            Err(Error::DimensionMismatch(_))
        ));
        let bad_q = r#"{"categories":["a"],"types":["x","y"],"P":[[0.2,0.3]],"q":[0.5,0.4]}"#;
        assert!(matches!(
            Instance::from_json(bad_q),
            Err(Error::PriorNotNormalized { .. })
        ));
        let neg = r#"{"categories":["a"],"types":["x"],"P":[[-0.1]],"q":[1.0]}"#;
        assert!(matches!(
            Instance::from_json(neg),
            Err(Error::ProbabilityOutOfRange { .. })
        ));
        let transposed = r#"{"categories":["a","b","c"],"types":["x","y"],
            "P":[[0.1,0.2,0.3],[0.4,0.5,0.6]],"q":[0.5,0.5]}"#;
        assert!(matches!(
            Instance::from_json(transposed),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn json_round_trip() {
        let inst = example1();
        assert_eq!(Instance::from_json(&inst.to_json()).unwrap(), inst);
    }

    #[test]
    fn immediate_reward_example() {
        let inst = example1();
        let q = inst.prior().clone();
        assert!((inst.immediate_reward(&q, 1) - 0.8).abs() < 1e-12);
        assert!((inst.immediate_reward(&q, 0) - 0.525).abs() < 1e-12);
        let v = Belief::vertex(2, 1);
        assert_eq!(inst.immediate_reward(&v, 0), 0.1);
    }

    #[test]
    fn bayes_update_example() {
        let inst = example1();
        let b = inst.bayes_update(inst.prior(), 0).unwrap();
        assert!((b[0] - 0.475 / 0.525).abs() < 1e-12);
        assert!((b[0] - 0.904762).abs() < 1e-6);
        assert!((b[1] - 0.095238).abs() < 1e-6);
    }

    #[test]
    fn uniform_row_leaves_belief_unchanged() {
        let inst = Instance::from_matrix(vec![vec![0.4, 0.4, 0.4]], vec![0.2, 0.3, 0.5]).unwrap();
        let b = inst.bayes_update(inst.prior(), 0).unwrap();
        for m in 0..3 {
            assert!((b[m] - inst.prior()[m]).abs() < 1e-15);
        }
    }

    #[test]
    fn vertex_is_absorbing() {
        let inst = example1();
        let v = Belief::vertex(2, 0);
        assert_eq!(inst.bayes_update(&v, 1).unwrap(), v);
    }

    #[test]
    fn zero_likelihood_is_an_error() {
        let inst = Instance::from_matrix(vec![vec![0.0, 0.5]], vec![0.5, 0.5]).unwrap();
        let v = Belief::vertex(2, 0);
        assert!(matches!(
            inst.bayes_update(&v, 0),
            Err(Error::ZeroLikelihood { category: 0 })
        ));
    }

    #[test]
    fn walk_records_rewards() {
        let inst = example1();
        let w = inst.walk(&[0, 0], inst.prior()).unwrap();
        assert_eq!(w.steps.len(), 2);
        assert_eq!(&w.steps[0].belief, inst.prior());
        assert!((w.steps[0].reward - 0.525).abs() < 1e-12);
        // q * P(k1,.)^2 normalized: 0.45125 / 0.45625
        assert!((w.end_belief[0] - 0.45125 / 0.45625).abs() < 1e-12);
        assert!((w.end_belief[0] - 0.98895).abs() < 1e-4);
        let one = inst.walk(&[1], inst.prior()).unwrap();
        assert_eq!(one.steps.len(), 1);
        assert_eq!(&one.steps[0].belief, inst.prior());
        assert!(inst.walk(&[], inst.prior()).is_err());
    }

    #[test]
    fn belief_validation() {
        assert!(Belief::new(vec![0.5, 0.6]).is_err());
        assert!(Belief::new(vec![1.2, -0.2]).is_err());
        assert!(Belief::new(vec![0.25, 0.75]).is_ok());
        assert!((Belief::vertex(3, 2).distance_to_vertex(0) - 2.0).abs() < 1e-15);
    }
}
