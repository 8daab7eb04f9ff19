//! Runtime benchmark of the branch-and-bound solver on generated instances,
//! with percentile-bootstrap confidence intervals.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{derive_seed, generate_instance, GeneratorConfig};
use crate::solvers::{solve_bnb, BnbOptions};

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;

/// Percentile-bootstrap interval for the mean of `samples`.
pub fn bootstrap_mean_ci<R: Rng>(
    samples: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> (f64, f64) {
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let at = |q: f64| {
        let idx = (q * (resamples - 1) as f64).round() as usize;
        means[idx.min(resamples - 1)]
    };
    (at(alpha), at(1.0 - alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// `serial` for single-worker solves, `parallel` otherwise.
    pub mode: String,
    pub n_types: usize,
    pub n_categories: usize,
    pub reps: usize,
    pub mean_runtime_ms: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
    pub mean_nodes: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// `(n_types, n_categories)` pairs.
    pub sizes: Vec<(usize, usize)>,
    pub reps: usize,
    pub epsilon: f64,
    pub bootstrap_resamples: usize,
    pub seed: u64,
    /// Solver workers; 1 gives the `serial` rows.
    pub workers: usize,
}

impl BenchConfig {
    pub fn new(sizes: Vec<(usize, usize)>, reps: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            sizes,
            reps,
            epsilon,
            bootstrap_resamples: DEFAULT_RESAMPLES,
            seed,
            workers: 1,
        }
    }
}

/// Times `reps` solves per size on instances generated from derived seeds.
pub fn bench_run(config: &BenchConfig) -> Result<BenchReport> {
    if config.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if config.bootstrap_resamples < MIN_RESAMPLES {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_RESAMPLES} bootstrap resamples required"
        )));
    }
    let options = BnbOptions::new(config.epsilon).with_workers(config.workers);
    let mode = if config.workers > 1 { "parallel" } else { "serial" };
    let mut rows = Vec::with_capacity(config.sizes.len());
    for (i, &(n_types, n_categories)) in config.sizes.iter().enumerate() {
        let size_seed = derive_seed(config.seed, i as u64);
        let mut times = Vec::with_capacity(config.reps);
        let mut nodes = 0u64;
        for rep in 0..config.reps {
            let gen = GeneratorConfig::new(n_categories, n_types, derive_seed(size_seed, rep as u64));
            let instance = generate_instance(&gen)?;
            let result = solve_bnb(&instance, &options)?;
            times.push(result.wall_time.as_secs_f64() * 1e3);
            nodes += result.nodes_expanded;
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(size_seed, u64::MAX));
        let (lo, hi) = bootstrap_mean_ci(&times, config.bootstrap_resamples, 0.95, &mut rng);
        rows.push(BenchRow {
            mode: mode.to_string(),
            n_types,
            n_categories,
            reps: config.reps,
            mean_runtime_ms: mean,
            ci95_low: lo,
            ci95_high: hi,
            mean_nodes: nodes as f64 / config.reps as f64,
        });
    }
    Ok(BenchReport { rows })
}

impl BenchReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<BenchRow>, _>>()?;
        let report = Self { rows };
        report.validate()?;
        Ok(report)
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            if row.reps == 0 {
                return Err(Error::Malformed("bench row with zero reps".into()));
            }
            if !(row.ci95_low <= row.mean_runtime_ms && row.mean_runtime_ms <= row.ci95_high) {
                return Err(Error::Malformed(format!(
                    "mean {} outside its interval [{}, {}]",
                    row.mean_runtime_ms, row.ci95_low, row.ci95_high
                )));
            }
        }
        Ok(())
    }
}
