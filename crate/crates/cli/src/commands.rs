//! Subcommand implementations.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rec_apc::analysis::{compute_constants, detect_convergence, uncertainty_curve, write_curve_csv};
use rec_apc::bench::{bench_run, BenchConfig};
use rec_apc::instances::{
    generate_instance, ingest_ratings, load_assignments, ClusterMode, GeneratorConfig,
    IngestConfig, RatingsTable,
};
use rec_apc::pomdp::{build_pomdp, format_number, write_pomdp_file};
use rec_apc::simulation::{simulate_many, simulate_many_to_csv, SimulationSummary};
use rec_apc::solvers::{
    policy_bfa, policy_myopic, solve_bnb, solve_bruteforce, solve_dp, BnbOptions, QueueDiscipline,
};
use rec_apc::valuation::{horizon_for_epsilon, lower_bound, value_finite_horizon, Policy};
use rec_apc::{Belief, Error, Instance};
use serde::Serialize;

use crate::{
    Algorithm, AnalyzeArgs, BenchArgs, ClusterModeArg, ExportArgs, GenArgs, IngestArgs, Queue,
    SimulateArgs, SolveArgs, WalkArgs,
};

pub enum Failure {
    Usage(String),
    Domain(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Domain(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Domain(Error::Io(e))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn write_json<T: Serialize>(value: &T, path: &Path) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(Error::Json)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(Error::Json)?;
    println!("{text}");
    Ok(())
}

fn names(instance: &Instance, seq: &[usize]) -> Vec<String> {
    seq.iter().map(|&k| instance.categories()[k].clone()).collect()
}

fn parse_categories(instance: &Instance, text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| instance.resolve_category(t).map_err(Failure::from))
        .collect()
}

fn parse_floats(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("not a number: {t:?}")))
        })
        .collect()
}

#[derive(Serialize)]
struct PolicyOut {
    prefix: Vec<String>,
    tail: String,
}

#[derive(Serialize)]
struct SolveOut {
    algorithm: &'static str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    upper_certificate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    prefix: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extended_policy: Option<PolicyOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes_expanded: Option<u64>,
    wall_time_ms: f64,
}

pub fn solve(args: SolveArgs) -> Outcome {
    let instance = Instance::load(&args.instance)?;
    if !(args.epsilon > 0.0) {
        return Err(Failure::Usage("--epsilon must be positive".into()));
    }
    let horizon = || -> Result<usize, Failure> {
        match args.horizon {
            Some(0) => Err(Failure::Usage("--horizon must be at least 1".into())),
            Some(h) => Ok(h),
            None => Ok(horizon_for_epsilon(&instance, args.epsilon)?),
        }
    };
    let started = std::time::Instant::now();
    let out = match args.algorithm {
        Algorithm::Bnb => {
            let queue = match args.queue {
                Queue::BestFirst => QueueDiscipline::BestFirst,
                Queue::Fifo => QueueDiscipline::Fifo,
            };
            let mut options = BnbOptions::new(args.epsilon)
                .with_queue(queue)
                .with_workers(args.workers.max(1));
            if let Some(b) = args.node_budget {
                options = options.with_node_budget(b);
            }
            let r = solve_bnb(&instance, &options)?;
            SolveOut {
                algorithm: "bnb",
                value: r.value,
                upper_certificate: Some(r.upper_certificate),
                certificate_gap: Some(r.certificate_gap()),
                horizon: None,
                prefix: names(&instance, &r.prefix),
                extended_policy: Some(PolicyOut {
                    prefix: names(&instance, &r.extended_policy.prefix),
                    tail: instance.categories()[r.extended_policy.tail].clone(),
                }),
                nodes_expanded: Some(r.nodes_expanded),
                wall_time_ms: r.wall_time.as_secs_f64() * 1e3,
            }
        }
        Algorithm::Dp | Algorithm::Brute => {
            let h = horizon()?;
            let (name, sol) = if matches!(args.algorithm, Algorithm::Dp) {
                ("dp", solve_dp(&instance, h)?)
            } else {
                ("brute", solve_bruteforce(&instance, h)?)
            };
            SolveOut {
                algorithm: name,
                value: sol.value,
                upper_certificate: None,
                certificate_gap: None,
                horizon: Some(h),
                prefix: names(&instance, &sol.prefix),
                extended_policy: None,
                nodes_expanded: None,
                wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            }
        }
        Algorithm::Myopic => {
            let h = horizon()?;
            let seq = policy_myopic(&instance, instance.prior(), h)?;
            let value = value_finite_horizon(&instance, instance.prior(), &seq, h)?;
            SolveOut {
                algorithm: "myopic",
                value,
                upper_certificate: None,
                certificate_gap: None,
                horizon: Some(h),
                prefix: names(&instance, &seq),
                extended_policy: None,
                nodes_expanded: None,
                wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            }
        }
        Algorithm::Bfa => {
            let k = policy_bfa(&instance, instance.prior());
            SolveOut {
                algorithm: "bfa",
                value: lower_bound(&instance, instance.prior()).0,
                upper_certificate: None,
                certificate_gap: None,
                horizon: None,
                prefix: Vec::new(),
                extended_policy: Some(PolicyOut {
                    prefix: Vec::new(),
                    tail: instance.categories()[k].clone(),
                }),
                nodes_expanded: None,
                wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            }
        }
    };

    println!("algorithm: {}", out.algorithm);
    println!("value: {}", out.value);
    if let (Some(u), Some(g)) = (out.upper_certificate, out.certificate_gap) {
        println!("upper certificate: {u}");
        println!("certificate gap: {g:e}");
    }
    if let Some(h) = out.horizon {
        println!("horizon: {h}");
    }
    println!("prefix: [{}]", out.prefix.join(", "));
    if let Some(p) = &out.extended_policy {
        println!("policy: [{}] then {} forever", p.prefix.join(", "), p.tail);
    }
    if let Some(n) = out.nodes_expanded {
        println!("nodes expanded: {n}");
    }
    println!("wall time: {:.3} ms", out.wall_time_ms);
    if let Some(path) = &args.out {
        write_json(&out, path)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct WalkStepOut {
    round: usize,
    category: String,
    belief: Vec<f64>,
    reward: f64,
}

#[derive(Serialize)]
struct WalkOut {
    types: Vec<String>,
    steps: Vec<WalkStepOut>,
    end_belief: Vec<f64>,
    truncated_value: f64,
}

pub fn walk(args: WalkArgs) -> Outcome {
    let instance = Instance::load(&args.instance)?;
    let prefix = parse_categories(&instance, &args.prefix)?;
    let start = match &args.start {
        Some(s) => Belief::new(parse_floats(s)?)?,
        None => instance.prior().clone(),
    };
    let walk = instance.walk(&prefix, &start)?;
    if let Some(path) = &args.out {
        let mut w = csv_writer(path)?;
        let mut header = vec!["round".to_string(), "category".into(), "reward".into()];
        header.extend(instance.types().iter().map(|t| format!("b_{t}")));
        w.write_record(&header).map_err(Error::Csv)?;
        for (t, step) in walk.steps.iter().enumerate() {
            let mut row = vec![
                (t + 1).to_string(),
                instance.categories()[step.category].clone(),
                step.reward.to_string(),
            ];
            row.extend(step.belief.weights().iter().map(|x| x.to_string()));
            w.write_record(&row).map_err(Error::Csv)?;
        }
        let mut row = vec![(walk.steps.len() + 1).to_string(), String::new(), String::new()];
        row.extend(walk.end_belief.weights().iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(Error::Csv)?;
        w.flush()?;
        return Ok(());
    }
    let out = WalkOut {
        types: instance.types().to_vec(),
        steps: walk
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| WalkStepOut {
                round: t + 1,
                category: instance.categories()[s.category].clone(),
                belief: s.belief.weights().to_vec(),
                reward: s.reward,
            })
            .collect(),
        end_belief: walk.end_belief.weights().to_vec(),
        truncated_value: walk.truncated_value(),
    };
    print_json(&out)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Failure> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

#[derive(Serialize)]
struct AnalyzeOut<'a> {
    constants: rec_apc::analysis::InstanceConstants,
    convergence: &'a rec_apc::analysis::ConvergenceReport,
    final_category_name: &'a str,
    final_type_name: &'a str,
}

pub fn analyze(args: AnalyzeArgs) -> Outcome {
    let instance = Instance::load(&args.instance)?;
    let k = compute_constants(&instance);
    let g = format_number;
    println!("c1 = {}  (1 - p_max)", g(k.c1));
    println!("c2 = {}  (smallest within-row gap)", g(k.c2));
    println!("c3 = {}  (smallest favourite margin)", g(k.c3));
    println!("c4 = {}  (smallest prior mass)", g(k.c4));
    println!("c = {}", g(k.c));
    if !k.is_positive() {
        println!("c = 0: convergence guarantees do not apply");
    }
    let report = detect_convergence(&instance, args.epsilon, args.max_rounds)?;
    println!("converged: {}", report.converged);
    println!("policy fixed from round T = {}", report.round);
    println!(
        "final category: {}, final type: {}",
        instance.categories()[report.final_category],
        instance.types()[report.final_type]
    );
    println!(
        "unconcentrated beliefs (delta = {}): {}",
        g(report.delta),
        report.unconcentrated_count
    );
    match report.theoretical_h {
        Some(h) => println!("theoretical bound H = {h}"),
        None => println!("theoretical bound H unavailable"),
    }
    if let Some(path) = &args.curve_out {
        let curve = uncertainty_curve(&instance, args.epsilon, args.rounds)?;
        write_curve_csv(&instance, &curve, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &args.out {
        write_json(
            &AnalyzeOut {
                constants: k,
                convergence: &report,
                final_category_name: &instance.categories()[report.final_category],
                final_type_name: &instance.types()[report.final_type],
            },
            path,
        )?;
    }
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Outcome {
    let instance = Instance::load(&args.instance)?;
    let prefix = parse_categories(&instance, &args.prefix)?;
    let tail = instance.resolve_category(args.tail.trim())?;
    let policy = Policy::new(prefix, tail);
    let summary: SimulationSummary = match &args.sessions_out {
        Some(path) => simulate_many_to_csv(
            &instance,
            &policy,
            args.sessions,
            args.seed,
            BufWriter::new(File::create(path)?),
        )?,
        None => simulate_many(&instance, &policy, args.sessions, args.seed)?,
    };
    println!("sessions: {}", summary.sessions);
    println!("mean likes: {}", summary.mean_likes);
    println!("standard error: {}", summary.std_error);
    println!("95% CI: [{}, {}]", summary.ci95_low, summary.ci95_high);
    for (name, t) in instance.types().iter().zip(&summary.per_type) {
        println!("  {name}: {} sessions, mean likes {}", t.sessions, t.mean_likes);
    }
    if let Some(path) = &args.out {
        write_json(&summary, path)?;
    }
    Ok(())
}

fn emit_instance(instance: &Instance, out: Option<&Path>) -> Outcome {
    match out {
        Some(path) => instance.save(path)?,
        None => println!("{}", instance.to_json()),
    }
    Ok(())
}

pub fn gen(args: GenArgs) -> Outcome {
    let config = GeneratorConfig {
        n_categories: args.categories,
        n_types: args.types,
        clip_threshold: args.clip,
        prior_logit_std: args.prior_std,
        seed: args.seed,
    };
    let instance = generate_instance(&config)?;
    emit_instance(&instance, args.out.as_deref())
}

pub fn ingest(args: IngestArgs) -> Outcome {
    let table = RatingsTable::load(&args.ratings, args.rating_max)?;
    let mode = match args.mode {
        ClusterModeArg::Kmeans => ClusterMode::AlternatingKmeans,
        ClusterModeArg::External => {
            let (Some(u), Some(i)) = (&args.user_assignments, &args.item_assignments) else {
                return Err(Failure::Usage(
                    "external mode needs --user-assignments and --item-assignments".into(),
                ));
            };
            ClusterMode::External {
                users: load_assignments(u)?,
                items: load_assignments(i)?,
            }
        }
    };
    let config = IngestConfig {
        n_user_clusters: args.user_clusters,
        n_item_clusters: args.item_clusters,
        mode,
        noise_std: args.noise_std,
        seed: args.seed,
    };
    let result = ingest_ratings(&table, &config)?;
    if !result.metadata.imputed_cells.is_empty() {
        eprintln!(
            "note: {} empty cluster cells imputed with the global mean ratio {}",
            result.metadata.imputed_cells.len(),
            format_number(result.metadata.global_mean_ratio)
        );
    }
    if let Some(path) = &args.metadata_out {
        write_json(&result.metadata, path)?;
    }
    emit_instance(&result.instance, args.out.as_deref())
}

pub fn export_pomdp(args: ExportArgs) -> Outcome {
    let instance = Instance::load(&args.instance)?;
    let model = build_pomdp(&instance);
    write_pomdp_file(&model, &args.out)?;
    println!(
        "wrote {} states, {} actions, discount {} to {}",
        model.n_states(),
        model.n_actions(),
        format_number(model.discount),
        args.out.display()
    );
    Ok(())
}

fn parse_sizes(text: &str) -> Result<Vec<(usize, usize)>, Failure> {
    text.split(',')
        .map(|s| {
            let bad = || Failure::Usage(format!("size {s:?} is not TYPESxCATEGORIES"));
            let (t, c) = s.trim().split_once('x').ok_or_else(bad)?;
            Ok((
                t.parse().map_err(|_| bad())?,
                c.parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

pub fn bench(args: BenchArgs) -> Outcome {
    let config = BenchConfig {
        sizes: parse_sizes(&args.sizes)?,
        reps: args.reps,
        epsilon: args.epsilon,
        bootstrap_resamples: args.resamples,
        seed: args.seed,
        workers: args.workers.max(1),
    };
    let report = bench_run(&config)?;
    match &args.out {
        Some(path) => report.write_csv(BufWriter::new(File::create(path)?))?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            report.write_csv(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}
