//! Convergence diagnostics for optimal belief walks.
//!
//! The instance constant `c` is the minimum of four margins: the tail margin
//! `1 - p_max`, the smallest within-row gap between two types, the smallest
//! favourite-versus-runner-up gap of any type, and the rarest prior mass.
//! With `c > 0` the optimal walk visits finitely many `delta`-unconcentrated
//! beliefs and ends up repeating one category; the functions here measure
//! that on concrete instances by re-solving at every belief of the walk.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Belief, Instance};
use crate::solvers::{solve_bnb_from, BnbOptions};

/// Rounds a category must repeat before the walk is declared settled.
pub const STABILITY_WINDOW: usize = 50;

/// Longest walk [`uncertainty_curve`] will trace while looking for the
/// settled vertex.
pub const MAX_TRACE_ROUNDS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c: f64,
    pub p_max: f64,
}

impl InstanceConstants {
    /// `c^2 / 4`, the concentration radius used by the convergence results.
    pub fn default_delta(&self) -> f64 {
        self.c * self.c / 4.0
    }

    pub fn is_positive(&self) -> bool {
        self.c > 0.0
    }

    /// `(1 - c) / c`, a ceiling on every value function.
    pub fn value_ceiling(&self) -> Option<f64> {
        self.is_positive().then(|| (1.0 - self.c) / self.c)
    }

    /// Guaranteed value increase after one optimal step from a
    /// `delta`-unconcentrated belief: `delta (1 - delta) c^2 / (1 - c)`.
    pub fn gap_bound(&self, delta: f64) -> Option<f64> {
        self.is_positive()
            .then(|| delta * (1.0 - delta) * self.c * self.c / (1.0 - self.c))
    }

    /// Most `delta`-unconcentrated beliefs an optimal walk can visit:
    /// `ceil((1 - c)^2 / (delta (1 - delta) c^3))`.
    pub fn unconcentrated_bound(&self, delta: f64) -> Option<f64> {
        if !self.is_positive() || !(delta > 0.0) || delta >= 1.0 {
            return None;
        }
        let c = self.c;
        Some(((1.0 - c).powi(2) / (delta * (1.0 - delta) * c.powi(3))).ceil())
    }
}

/// Computes `c1..c4` and `c`. A minimum over an empty set (one type, or one
/// category) is taken as 1.
pub fn compute_constants(instance: &Instance) -> InstanceConstants {
    let n_cat = instance.n_categories();
    let n_types = instance.n_types();
    let p_max = instance.p_max();
    let c1 = 1.0 - p_max;

    let mut c2: f64 = 1.0;
    for k in 0..n_cat {
        let row = instance.row(k);
        for a in 0..n_types {
            for b in a + 1..n_types {
                c2 = c2.min((row[a] - row[b]).abs());
            }
        }
    }

    let mut c3: f64 = 1.0;
    if n_cat > 1 {
        for m in 0..n_types {
            let mut col: Vec<f64> = (0..n_cat).map(|k| instance.pref(k, m)).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            c3 = c3.min(col[0] - col[1]);
        }
    }

    let c4 = instance
        .prior()
        .weights()
        .iter()
        .copied()
        .fold(1.0, f64::min);
    let c = c1.min(c2).min(c3).min(c4);
    InstanceConstants {
        c1,
        c2,
        c3,
        c4,
        c,
        p_max,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Concentration {
    Unconcentrated,
    ConcentratedAt(usize),
}

/// `(delta, m)`-concentrated when `b(m) >= 1 - delta`. If several types
/// qualify (only possible for `delta >= 0.5`) the heaviest one is reported.
pub fn classify_belief(belief: &Belief, delta: f64) -> Concentration {
    let m = belief.mode();
    if belief[m] >= 1.0 - delta {
        Concentration::ConcentratedAt(m)
    } else {
        Concentration::Unconcentrated
    }
}

/// The walk produced by re-solving at every visited belief and playing the
/// first recommended category.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalTrace {
    /// `beliefs[t]` is the belief at round `t + 1`; one longer than
    /// `categories`.
    pub beliefs: Vec<Belief>,
    pub categories: Vec<usize>,
}

impl OptimalTrace {
    pub fn new(start: Belief) -> Self {
        Self {
            beliefs: vec![start],
            categories: Vec::new(),
        }
    }

    pub fn rounds(&self) -> usize {
        self.categories.len()
    }

    /// Plays `rounds` more rounds.
    pub fn extend(&mut self, instance: &Instance, epsilon: f64, rounds: usize) -> Result<()> {
        let options = BnbOptions::new(epsilon);
        for _ in 0..rounds {
            let belief = self.beliefs.last().expect("trace has a start belief");
            let action = solve_bnb_from(instance, belief, &options)?.first_action();
            let next = instance.bayes_update(belief, action)?;
            self.categories.push(action);
            self.beliefs.push(next);
        }
        Ok(())
    }

    /// First round (1-based) from which the category never changes again.
    pub fn settled_round(&self) -> usize {
        let c = &self.categories;
        (1..c.len())
            .rev()
            .find(|&t| c[t] != c[t - 1])
            .map_or(1, |t| t + 1)
    }

    pub fn is_settled(&self) -> bool {
        !self.categories.is_empty()
            && self.rounds() + 1 - self.settled_round() >= STABILITY_WINDOW
    }
}

pub fn trace_optimal_walk(
    instance: &Instance,
    start: &Belief,
    epsilon: f64,
    rounds: usize,
) -> Result<OptimalTrace> {
    instance.check_belief(start)?;
    let mut trace = OptimalTrace::new(start.clone());
    trace.extend(instance, epsilon, rounds)?;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// Round from which the recommended category stays fixed.
    #[serde(rename = "T")]
    pub round: usize,
    pub final_category: usize,
    pub final_type: usize,
    pub delta: f64,
    pub unconcentrated_count: usize,
    /// Bound on unconcentrated beliefs; `None` when `c = 0`.
    pub theoretical_h: Option<f64>,
    pub constants: InstanceConstants,
    #[serde(skip)]
    pub trace: OptimalTrace,
}

/// Traces `max_rounds` rounds of the optimal walk from the prior and reports
/// when the policy settles.
pub fn detect_convergence(
    instance: &Instance,
    epsilon: f64,
    max_rounds: usize,
) -> Result<ConvergenceReport> {
    let trace = trace_optimal_walk(instance, instance.prior(), epsilon, max_rounds)?;
    report_for(instance, trace)
}

fn report_for(instance: &Instance, trace: OptimalTrace) -> Result<ConvergenceReport> {
    if !trace.is_settled() {
        return Err(Error::NotConvergedWithinBudget {
            rounds: trace.rounds(),
        });
    }
    let constants = compute_constants(instance);
    let delta = constants.default_delta();
    let unconcentrated_count = trace.beliefs[..trace.rounds()]
        .iter()
        .filter(|b| classify_belief(b, delta) == Concentration::Unconcentrated)
        .count();
    Ok(ConvergenceReport {
        converged: true,
        round: trace.settled_round(),
        final_category: *trace.categories.last().expect("nonempty trace"),
        final_type: trace.beliefs.last().expect("nonempty trace").mode(),
        delta,
        unconcentrated_count,
        theoretical_h: constants.unconcentrated_bound(delta),
        constants,
        trace,
    })
}

/// Distance of the optimal walk from the vertex it settles at.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyCurve {
    pub terminal_type: usize,
    /// `distances[t] = ||b_{t+1} - e_terminal||_1`.
    pub distances: Vec<f64>,
    pub categories: Vec<usize>,
    pub beliefs: Vec<Belief>,
    pub report: ConvergenceReport,
}

pub fn uncertainty_curve(
    instance: &Instance,
    epsilon: f64,
    rounds: usize,
) -> Result<UncertaintyCurve> {
    let mut trace = OptimalTrace::new(instance.prior().clone());
    trace.extend(instance, epsilon, rounds.max(1) + STABILITY_WINDOW)?;
    while !trace.is_settled() {
        let more = trace.rounds().min(MAX_TRACE_ROUNDS - trace.rounds());
        if more == 0 {
            return Err(Error::NotConvergedWithinBudget {
                rounds: trace.rounds(),
            });
        }
        trace.extend(instance, epsilon, more)?;
    }
    let report = report_for(instance, trace)?;
    let terminal_type = report.final_type;
    let beliefs: Vec<Belief> = report.trace.beliefs[..rounds].to_vec();
    Ok(UncertaintyCurve {
        terminal_type,
        distances: beliefs
            .iter()
            .map(|b| b.distance_to_vertex(terminal_type))
            .collect(),
        categories: report.trace.categories[..rounds].to_vec(),
        beliefs,
        report,
    })
}

/// One row per round: `round,l1_uncertainty,chosen_category,b_<type>...`.
pub fn write_curve_csv<W: Write>(
    instance: &Instance,
    curve: &UncertaintyCurve,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "round".to_string(),
        "l1_uncertainty".to_string(),
        "chosen_category".to_string(),
    ];
    header.extend(instance.types().iter().map(|t| format!("b_{t}")));
    w.write_record(&header)?;
    for (t, ((d, k), b)) in curve
        .distances
        .iter()
        .zip(&curve.categories)
        .zip(&curve.beliefs)
        .enumerate()
    {
        let mut row = vec![
            (t + 1).to_string(),
            d.to_string(),
            instance.categories()[*k].clone(),
        ];
        row.extend(b.weights().iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCheck {
    pub measured_gap: f64,
    pub theoretical_gap: f64,
    pub holds: bool,
}

/// Measures `V*(tau(b, a*)) - V*(b)` with two `epsilon`-accurate solves and
/// compares it against the guaranteed increase for a `delta`-unconcentrated
/// belief. The belief qualifies when no type has mass above `1 - delta`.
pub fn verify_gap_theorem(
    instance: &Instance,
    belief: &Belief,
    delta: f64,
    epsilon: f64,
) -> Result<GapCheck> {
    instance.check_belief(belief)?;
    let constants = compute_constants(instance);
    let theoretical_gap = constants
        .gap_bound(delta)
        .ok_or_else(|| Error::PreconditionUnmet("instance constant c is 0".into()))?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::PreconditionUnmet(format!("delta = {delta} outside (0, 1)")));
    }
    if belief.weights().iter().any(|&w| w > 1.0 - delta) {
        return Err(Error::PreconditionUnmet(format!(
            "belief {belief} is {delta}-concentrated"
        )));
    }
    let options = BnbOptions::new(epsilon);
    let here = solve_bnb_from(instance, belief, &options)?;
    let next = instance.bayes_update(belief, here.first_action())?;
    let there = solve_bnb_from(instance, &next, &options)?;
    let measured_gap = there.value - here.value;
    Ok(GapCheck {
        measured_gap,
        theoretical_gap,
        holds: measured_gap >= theoretical_gap - 2.0 * epsilon,
    })
}

/// Value of the best policy starting with each category, `p_k(b) (1 +
/// V*(tau(b, k)))`, each accurate to `epsilon`.
pub fn first_action_values(instance: &Instance, belief: &Belief, epsilon: f64) -> Result<Vec<f64>> {
    let options = BnbOptions::new(epsilon);
    (0..instance.n_categories())
        .map(|k| {
            let p = instance.immediate_reward(belief, k);
            if p <= crate::model::MIN_LIKELIHOOD {
                return Ok(0.0);
            }
            let next = instance.bayes_update(belief, k)?;
            Ok(p * (1.0 + solve_bnb_from(instance, &next, &options)?.value))
        })
        .collect()
}

/// Difference between the best and the second-best first action.
pub fn first_action_margin(instance: &Instance, belief: &Belief, epsilon: f64) -> Result<f64> {
    let mut values = first_action_values(instance, belief, epsilon)?;
    if values.len() < 2 {
        return Ok(f64::INFINITY);
    }
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values[0] - values[1])
}
