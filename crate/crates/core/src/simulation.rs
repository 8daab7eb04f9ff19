//! Monte Carlo sessions against a fixed policy.
//!
//! A session samples a type from the prior, then shows the policy's
//! categories until the first dislike. Session `i` of a run with seed `s`
//! draws from ChaCha8 seeded with `s` on stream `i`, so any session can be
//! replayed on its own and results do not depend on thread scheduling.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Instance;
use crate::valuation::Policy;

/// Longest session simulated before giving up with an error.
pub const ROUND_CAP: u64 = 10_000_000;

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SessionOutcome {
    pub sampled_type: usize,
    /// Likes collected, equal to the number of rounds survived.
    pub likes: u64,
}

/// Random stream for session `index` of a run seeded with `seed`.
pub fn session_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs session 0 of a run seeded with `seed`.
pub fn simulate_session(instance: &Instance, policy: &Policy, seed: u64) -> Result<SessionOutcome> {
    policy.validate(instance)?;
    run_session(instance, policy, &mut session_rng(seed, 0))
}

fn sample_type<R: Rng>(instance: &Instance, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let weights = instance.prior().weights();
    let mut acc = 0.0;
    for (m, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return m;
        }
    }
    weights.len() - 1
}

fn run_session<R: Rng>(instance: &Instance, policy: &Policy, rng: &mut R) -> Result<SessionOutcome> {
    let m = sample_type(instance, rng);
    let mut likes = 0u64;
    loop {
        if likes >= ROUND_CAP {
            return Err(Error::RoundCapExceeded { cap: ROUND_CAP });
        }
        let k = policy.action_at(likes as usize + 1);
        if rng.random::<f64>() < instance.pref(k, m) {
            likes += 1;
        } else {
            return Ok(SessionOutcome {
                sampled_type: m,
                likes,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeSummary {
    pub sessions: u64,
    pub mean_likes: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub sessions: u64,
    pub mean_likes: f64,
    pub std_error: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub per_type: Vec<TypeSummary>,
}

/// Exact integer tallies, so that merging partial results in any order gives
/// identical summaries.
#[derive(Debug, Clone, Default)]
struct Tally {
    n: u64,
    sum: u128,
    sum_sq: u128,
    /// `(count, sum, sum of squares)` per sampled type.
    per_type: Vec<(u64, u128, u128)>,
}

impl Tally {
    fn new(n_types: usize) -> Self {
        Self {
            per_type: vec![(0, 0, 0); n_types],
            ..Self::default()
        }
    }

    fn add(&mut self, o: &SessionOutcome) {
        let x = u128::from(o.likes);
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
        let t = &mut self.per_type[o.sampled_type];
        t.0 += 1;
        t.1 += x;
        t.2 += x * x;
    }

    fn merge(mut self, other: Self) -> Self {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        for (a, b) in self.per_type.iter_mut().zip(other.per_type) {
            a.0 += b.0;
            a.1 += b.1;
            a.2 += b.2;
        }
        self
    }

    fn summary(&self) -> SimulationSummary {
        let (mean, se) = mean_and_se(self.n, self.sum, self.sum_sq);
        SimulationSummary {
            sessions: self.n,
            mean_likes: mean,
            std_error: se,
            ci95_low: mean - Z95 * se,
            ci95_high: mean + Z95 * se,
            per_type: self
                .per_type
                .iter()
                .map(|&(c, s, sq)| {
                    let (mean_likes, std_error) = mean_and_se(c, s, sq);
                    TypeSummary {
                        sessions: c,
                        mean_likes,
                        std_error,
                    }
                })
                .collect(),
        }
    }
}

/// Sample mean and its standard error from exact sums; zeros when `n = 0`.
fn mean_and_se(n: u64, sum: u128, sum_sq: u128) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let mean = sum as f64 / nf;
    if n == 1 {
        return (mean, 0.0);
    }
    // n * sum_sq - sum^2 is exact in integers
    let centered = (n as u128 * sum_sq - sum * sum) as f64 / nf;
    let var = centered / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Runs `sessions` independent sessions in parallel.
pub fn simulate_many(
    instance: &Instance,
    policy: &Policy,
    sessions: u64,
    seed: u64,
) -> Result<SimulationSummary> {
    if sessions == 0 {
        return Err(Error::EmptySimulation);
    }
    policy.validate(instance)?;
    let n_types = instance.n_types();
    let tally = (0..sessions)
        .into_par_iter()
        .try_fold(
            || Tally::new(n_types),
            |mut t, i| {
                t.add(&run_session(instance, policy, &mut session_rng(seed, i))?);
                Ok::<_, Error>(t)
            },
        )
        .try_reduce(|| Tally::new(n_types), |a, b| Ok(a.merge(b)))?;
    Ok(tally.summary())
}

/// Runs the same sessions as [`simulate_many`] serially and writes one CSV
/// row per session: `session,type,likes`.
pub fn simulate_many_to_csv<W: Write>(
    instance: &Instance,
    policy: &Policy,
    sessions: u64,
    seed: u64,
    out: W,
) -> Result<SimulationSummary> {
    if sessions == 0 {
        return Err(Error::EmptySimulation);
    }
    policy.validate(instance)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["session", "type", "likes"])?;
    let mut tally = Tally::new(instance.n_types());
    for i in 0..sessions {
        let o = run_session(instance, policy, &mut session_rng(seed, i))?;
        w.write_record([
            i.to_string(),
            instance.types()[o.sampled_type].clone(),
            o.likes.to_string(),
        ])?;
        tally.add(&o);
    }
    w.flush()?;
    Ok(tally.summary())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> Instance {
        Instance::from_matrix(vec![vec![0.95, 0.1], vec![0.79, 0.81]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let inst = example1();
        let pol = Policy::fixed(0);
        let a = simulate_many(&inst, &pol, 2000, 7).unwrap();
        let b = simulate_many(&inst, &pol, 2000, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_many(&inst, &pol, 2000, 8).unwrap();
        assert_ne!(a.mean_likes, c.mean_likes);
    }

    #[test]
    fn csv_path_matches_parallel_path() {
        let inst = example1();
        let pol = Policy::new(vec![1, 1], 0);
        let mut buf = Vec::new();
        let serial = simulate_many_to_csv(&inst, &pol, 500, 3, &mut buf).unwrap();
        assert_eq!(serial, simulate_many(&inst, &pol, 500, 3).unwrap());
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 501);
    }

    #[test]
    fn single_session_replays() {
        let inst = example1();
        let pol = Policy::fixed(1);
        assert_eq!(
            simulate_session(&inst, &pol, 11).unwrap(),
            simulate_session(&inst, &pol, 11).unwrap()
        );
    }

    #[test]
    fn zero_sessions_rejected() {
        let inst = example1();
        assert!(matches!(
            simulate_many(&inst, &Policy::fixed(0), 0, 1),
            Err(Error::EmptySimulation)
        ));
    }

    #[test]
    fn all_zero_row_gives_zero_likes() {
        let inst = Instance::from_matrix(vec![vec![0.0, 0.0], vec![0.5, 0.5]], vec![0.5, 0.5])
            .unwrap();
        let s = simulate_many(&inst, &Policy::fixed(0), 100, 1).unwrap();
        assert_eq!(s.mean_likes, 0.0);
        assert_eq!(s.std_error, 0.0);
    }

    #[test]
    fn mean_near_value() {
        let inst = example1();
        let pol = Policy::fixed(0);
        let s = simulate_many(&inst, &pol, 20_000, 5).unwrap();
        let v = crate::valuation::value_policy(&inst, inst.prior(), &pol);
        assert!((s.mean_likes - v).abs() < 4.0 * s.std_error);
    }
}
