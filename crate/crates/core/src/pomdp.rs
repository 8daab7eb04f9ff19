//! Export as an explicitly discounted POMDP.
//!
//! Each type `m` is split into a start state `m_s` and a surviving state
//! `m_f`, plus one absorbing state for a churned user. The first like moves
//! `m_s` to `m_f` with probability `P(k, m)`; afterwards `m_f` survives with
//! `P(k, m) / p_max` and the discount `p_max` restores the original
//! probabilities. Each like earns reward 1.
//!
//! The text form is the classic Cassandra `.pomdp` layout. Numbers are
//! written with the fewest digits that parse back exactly.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::valuation::Policy;

pub const ABSORB: &str = "ABSORB";
pub const LIKE: usize = 0;
pub const DISLIKE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub observations: Vec<String>,
    pub discount: f64,
    pub start: Vec<f64>,
    /// `[a][s][s']`, row-major.
    pub transitions: Vec<f64>,
    /// `[a][s'][o]`, row-major.
    pub observation_probs: Vec<f64>,
    /// `[a][s][s']`, row-major; independent of the observation.
    pub rewards: Vec<f64>,
}

/// Replaces characters that would break the whitespace-separated format.
fn sanitize(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

/// Sanitized names, falling back to `prefix<i>` if sanitizing collides.
fn names(raw: &[String], prefix: &str) -> Vec<String> {
    let clean: Vec<String> = raw.iter().map(|n| sanitize(n)).collect();
    let mut sorted = clean.clone();
    sorted.sort();
    sorted.dedup();
    let reserved = clean
        .iter()
        .any(|n| n == ABSORB || n == "like" || n == "dislike");
    if sorted.len() == clean.len() && !reserved {
        clean
    } else {
        (1..=raw.len()).map(|i| format!("{prefix}{i}")).collect()
    }
}

pub fn build_pomdp(instance: &Instance) -> PomdpModel {
    let n_types = instance.n_types();
    let n_cat = instance.n_categories();
    let n_s = 2 * n_types + 1;
    let absorb = 2 * n_types;
    let gamma = instance.p_max();
    let type_names = names(instance.types(), "m");
    let mut states: Vec<String> = type_names.iter().map(|t| format!("{t}_s")).collect();
    states.extend(type_names.iter().map(|t| format!("{t}_f")));
    states.push(ABSORB.to_string());

    let mut transitions = vec![0.0; n_cat * n_s * n_s];
    let mut rewards = vec![0.0; n_cat * n_s * n_s];
    let mut observation_probs = vec![0.0; n_cat * n_s * 2];
    for k in 0..n_cat {
        let t = |s: usize, s2: usize| k * n_s * n_s + s * n_s + s2;
        for m in 0..n_types {
            let (s, f) = (m, n_types + m);
            let p = instance.pref(k, m);
            let rescaled = if gamma > 0.0 { (p / gamma).min(1.0) } else { 0.0 };
            transitions[t(s, f)] = p;
            transitions[t(s, absorb)] = 1.0 - p;
            transitions[t(f, f)] = rescaled;
            transitions[t(f, absorb)] = 1.0 - rescaled;
            rewards[t(s, f)] = 1.0;
            rewards[t(f, f)] = 1.0;
        }
        transitions[t(absorb, absorb)] = 1.0;
        for s2 in 0..n_s {
            let o = if s2 == absorb { DISLIKE } else { LIKE };
            observation_probs[k * n_s * 2 + s2 * 2 + o] = 1.0;
        }
    }
    let mut start = vec![0.0; n_s];
    start[..n_types].copy_from_slice(instance.prior().weights());

    PomdpModel {
        states,
        actions: names(instance.categories(), "k"),
        observations: vec!["like".into(), "dislike".into()],
        discount: gamma,
        start,
        transitions,
        observation_probs,
        rewards,
    }
}

/// `%g`-style formatting with 12 significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

/// `%g`-style layout with the fewest digits that parse back to exactly `x`.
/// Used for model files so that reparsed values match bit for bit.
pub fn format_exact(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..17).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    format!("{x}")
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl PomdpModel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn transition(&self, a: usize, s: usize, s2: usize) -> f64 {
        let n = self.n_states();
        self.transitions[a * n * n + s * n + s2]
    }

    pub fn reward(&self, a: usize, s: usize, s2: usize) -> f64 {
        let n = self.n_states();
        self.rewards[a * n * n + s * n + s2]
    }

    pub fn observation(&self, a: usize, s2: usize, o: usize) -> f64 {
        self.observation_probs[a * self.n_states() * 2 + s2 * 2 + o]
    }

    /// Largest deviation of any transition row sum from 1.
    pub fn max_row_error(&self) -> f64 {
        let n = self.n_states();
        self.transitions
            .chunks(n)
            .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Expected reward of one step under action `a` from each state.
    fn expected_rewards(&self, a: usize) -> Vec<f64> {
        let n = self.n_states();
        (0..n)
            .map(|s| {
                (0..n)
                    .map(|s2| self.transition(a, s, s2) * self.reward(a, s, s2))
                    .sum()
            })
            .collect()
    }

    fn propagate(&self, dist: &[f64], a: usize) -> Vec<f64> {
        let n = self.n_states();
        let mut next = vec![0.0; n];
        for (s, &d) in dist.iter().enumerate() {
            if d != 0.0 {
                for (s2, x) in next.iter_mut().enumerate() {
                    *x += d * self.transition(a, s, s2);
                }
            }
        }
        next
    }

    /// Discounted expected reward of playing `actions` from the start
    /// distribution and stopping.
    pub fn sequence_value(&self, actions: &[usize]) -> f64 {
        let mut dist = self.start.clone();
        let mut discount = 1.0;
        let mut total = 0.0;
        for &a in actions {
            let r = self.expected_rewards(a);
            total += discount * dist.iter().zip(&r).map(|(d, r)| d * r).sum::<f64>();
            dist = self.propagate(&dist, a);
            discount *= self.discount;
        }
        total
    }

    /// Infinite-horizon discounted value of a prefix-then-tail policy. The
    /// tail value solves `(I - gamma T_k) V = r_k`.
    pub fn discounted_value(&self, policy: &Policy) -> Result<f64> {
        let n = self.n_states();
        for &a in policy.prefix.iter().chain(std::iter::once(&policy.tail)) {
            if a >= self.n_actions() {
                return Err(Error::IndexOutOfRange {
                    what: "action",
                    index: a,
                    len: self.n_actions(),
                });
            }
        }
        let mut dist = self.start.clone();
        let mut discount = 1.0;
        let mut total = 0.0;
        for &a in &policy.prefix {
            let r = self.expected_rewards(a);
            total += discount * dist.iter().zip(&r).map(|(d, r)| d * r).sum::<f64>();
            dist = self.propagate(&dist, a);
            discount *= self.discount;
        }
        let k = policy.tail;
        let system = DMatrix::from_fn(n, n, |s, s2| {
            let id = if s == s2 { 1.0 } else { 0.0 };
            id - self.discount * self.transition(k, s, s2)
        });
        let rhs = DVector::from_vec(self.expected_rewards(k));
        let v = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::InvalidArgument("singular tail system".into()))?;
        total += discount * dist.iter().zip(v.iter()).map(|(d, v)| d * v).sum::<f64>();
        Ok(total)
    }

    /// Belief over states after playing `a` and observing `o`.
    pub fn filter(&self, belief: &[f64], a: usize, o: usize) -> Result<Vec<f64>> {
        let pred = self.propagate(belief, a);
        let mut post: Vec<f64> = pred
            .iter()
            .enumerate()
            .map(|(s2, p)| p * self.observation(a, s2, o))
            .collect();
        let z: f64 = post.iter().sum();
        if z <= 0.0 {
            return Err(Error::ZeroLikelihood { category: a });
        }
        post.iter_mut().for_each(|x| *x /= z);
        Ok(post)
    }

    pub fn to_text(&self) -> String {
        let n = self.n_states();
        let mut out = String::new();
        let f = format_exact;
        let _ = writeln!(out, "discount: {}", f(self.discount));
        let _ = writeln!(out, "values: reward");
        let _ = writeln!(out, "states: {}", self.states.join(" "));
        let _ = writeln!(out, "actions: {}", self.actions.join(" "));
        let _ = writeln!(out, "observations: {}", self.observations.join(" "));
        let start: Vec<String> = self.start.iter().map(|x| f(*x)).collect();
        let _ = writeln!(out, "start: {}", start.join(" "));
        out.push('\n');
        for (a, an) in self.actions.iter().enumerate() {
            for s in 0..n {
                for s2 in 0..n {
                    let p = self.transition(a, s, s2);
                    if p != 0.0 {
                        let _ = writeln!(
                            out,
                            "T: {an} : {} : {} {}",
                            self.states[s],
                            self.states[s2],
                            f(p)
                        );
                    }
                }
            }
        }
        out.push('\n');
        for (a, an) in self.actions.iter().enumerate() {
            for s2 in 0..n {
                for (o, on) in self.observations.iter().enumerate() {
                    let p = self.observation(a, s2, o);
                    if p != 0.0 {
                        let _ = writeln!(out, "O: {an} : {} : {on} {}", self.states[s2], f(p));
                    }
                }
            }
        }
        out.push('\n');
        for (a, an) in self.actions.iter().enumerate() {
            for s in 0..n {
                for s2 in 0..n {
                    let r = self.reward(a, s, s2);
                    if r != 0.0 {
                        let _ = writeln!(
                            out,
                            "R: {an} : {} : {} : * {}",
                            self.states[s],
                            self.states[s2],
                            f(r)
                        );
                    }
                }
            }
        }
        out
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    /// Reads the subset of the format that [`PomdpModel::to_text`] emits.
    pub fn parse(text: &str) -> Result<Self> {
        let mut discount = None;
        let mut states: Vec<String> = Vec::new();
        let mut actions: Vec<String> = Vec::new();
        let mut observations: Vec<String> = Vec::new();
        let mut start: Vec<f64> = Vec::new();
        let mut entries: Vec<(usize, char, Vec<String>, f64)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |msg: String| Error::PomdpParse { line: line_no, msg };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, rest) = line
                .split_once(':')
                .ok_or_else(|| err(format!("expected `key: value`, got {line:?}")))?;
            let words = || rest.split_whitespace().map(String::from).collect::<Vec<_>>();
            let number = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(format!("bad number {s:?}")))
            };
            match key.trim() {
                "discount" => discount = Some(number(rest.trim())?),
                "values" => {
                    if rest.trim() != "reward" {
                        return Err(err("only `values: reward` is supported".into()));
                    }
                }
                "states" => states = words(),
                "actions" => actions = words(),
                "observations" => observations = words(),
                "start" => start = words().iter().map(|w| number(w)).collect::<Result<_>>()?,
                tag @ ("T" | "O" | "R") => {
                    let mut fields: Vec<String> =
                        rest.split(':').map(|s| s.trim().to_string()).collect();
                    let last = fields.pop().unwrap_or_default();
                    let mut tail: Vec<&str> = last.split_whitespace().collect();
                    let value = tail
                        .pop()
                        .ok_or_else(|| err("missing value".into()))
                        .and_then(number)?;
                    fields.push(tail.join(" "));
                    let arity = if tag == "R" { 4 } else { 3 };
                    if fields.len() != arity {
                        return Err(err(format!("{tag} entry needs {arity} fields")));
                    }
                    entries.push((line_no, tag.chars().next().unwrap(), fields, value));
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }

        let discount = discount.ok_or(Error::PomdpParse {
            line: 0,
            msg: "missing discount".into(),
        })?;
        let (n_s, n_a) = (states.len(), actions.len());
        if start.len() != n_s {
            return Err(Error::PomdpParse {
                line: 0,
                msg: format!("start has {} entries for {n_s} states", start.len()),
            });
        }
        let mut model = PomdpModel {
            transitions: vec![0.0; n_a * n_s * n_s],
            observation_probs: vec![0.0; n_a * n_s * observations.len()],
            rewards: vec![0.0; n_a * n_s * n_s],
            states,
            actions,
            observations,
            discount,
            start,
        };
        for (line, tag, fields, value) in entries {
            let find = |names: &[String], name: &str| {
                names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::PomdpParse {
                        line,
                        msg: format!("unknown name {name:?}"),
                    })
            };
            let a = find(&model.actions, &fields[0])?;
            match tag {
                'T' => {
                    let s = find(&model.states, &fields[1])?;
                    let s2 = find(&model.states, &fields[2])?;
                    model.transitions[a * n_s * n_s + s * n_s + s2] = value;
                }
                'O' => {
                    let s2 = find(&model.states, &fields[1])?;
                    let o = find(&model.observations, &fields[2])?;
                    let n_o = model.observations.len();
                    model.observation_probs[a * n_s * n_o + s2 * n_o + o] = value;
                }
                _ => {
                    let s = find(&model.states, &fields[1])?;
                    let s2 = find(&model.states, &fields[2])?;
                    if fields[3] != "*" {
                        return Err(Error::PomdpParse {
                            line,
                            msg: "rewards must not depend on the observation".into(),
                        });
                    }
                    model.rewards[a * n_s * n_s + s * n_s + s2] = value;
                }
            }
        }
        Ok(model)
    }
}

pub fn write_pomdp_file(model: &PomdpModel, destination: impl AsRef<Path>) -> Result<()> {
    std::fs::write(destination, model.to_text())?;
    Ok(())
}
