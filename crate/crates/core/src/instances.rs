//! Synthetic instances from latent vectors, and instances aggregated from a
//! user-item ratings table.
//!
//! Normal draws use the Box-Muller transform on ChaCha8 uniforms, a
//! procedure simple enough to reproduce in any language.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Instance;

/// Entries of generated and ingested preference matrices are kept in
/// `[PROB_CLIP, 1 - PROB_CLIP]`.
pub const PROB_CLIP: f64 = 0.01;

/// Iteration cap for the alternating co-clustering.
pub const KMEANS_MAX_ITERS: usize = 100;

/// Standard normal sampler (Box-Muller, both outputs used in order).
#[derive(Debug, Clone)]
pub struct NormalSampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the logarithm finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Seed for item `index` of a batch seeded with `base` (SplitMix64 finaliser).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_categories: usize,
    pub n_types: usize,
    pub clip_threshold: f64,
    pub prior_logit_std: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(n_categories: usize, n_types: usize, seed: u64) -> Self {
        Self {
            n_categories,
            n_types,
            clip_threshold: PROB_CLIP,
            prior_logit_std: 0.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_categories == 0 || self.n_types == 0 {
            return Err(Error::InvalidArgument(
                "need at least one category and one type".into(),
            ));
        }
        if !(self.clip_threshold > 0.0 && self.clip_threshold < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "clip threshold {} outside (0, 0.5)",
                self.clip_threshold
            )));
        }
        if !(self.prior_logit_std >= 0.0 && self.prior_logit_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "prior logit std {} must be finite and nonnegative",
                self.prior_logit_std
            )));
        }
        Ok(())
    }
}

/// Draws `P` from cosine similarities of Gaussian latent vectors and `q`
/// from a softmax of Gaussian logits, both clipped.
pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance> {
    config.validate()?;
    let (n_cat, n_types, clip) = (config.n_categories, config.n_types, config.clip_threshold);
    let dim = n_cat;
    let mut normal = NormalSampler::new(config.seed);
    let mut draw = |rows: usize| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..dim).map(|_| normal.sample()).collect())
            .collect()
    };
    let actions = draw(n_cat);
    let types = draw(n_types);

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let prefs: Vec<Vec<f64>> = actions
        .iter()
        .map(|a| {
            types
                .iter()
                .map(|t| {
                    let denom = norm(a) * norm(t);
                    let cos = if denom > 0.0 {
                        a.iter().zip(t).map(|(x, y)| x * y).sum::<f64>() / denom
                    } else {
                        0.0
                    };
                    ((cos + 1.0) / 2.0).clamp(clip, 1.0 - clip)
                })
                .collect()
        })
        .collect();

    let logits: Vec<f64> = (0..n_types)
        .map(|_| config.prior_logit_std * normal.sample())
        .collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut q: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = q.iter().sum();
    let lo = clip / n_types as f64;
    let hi = 1.0 - clip;
    q.iter_mut().for_each(|x| *x = (*x / total).clamp(lo, hi));
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= total);

    Instance::from_matrix(prefs, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable {
    ratings: Vec<Rating>,
    rating_max: f64,
}

impl RatingsTable {
    pub const DEFAULT_RATING_MAX: f64 = 5.0;

    pub fn new(ratings: Vec<Rating>, rating_max: f64) -> Result<Self> {
        if !(rating_max >= 1.0 && rating_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "rating_max {rating_max} must be at least 1"
            )));
        }
        if ratings.is_empty() {
            return Err(Error::Malformed("ratings table is empty".into()));
        }
        for r in &ratings {
            if !(r.rating >= 1.0 && r.rating <= rating_max) {
                return Err(Error::Malformed(format!(
                    "rating {} by {} on {} outside [1, {rating_max}]",
                    r.rating, r.user_id, r.item_id
                )));
            }
        }
        Ok(Self {
            ratings,
            rating_max,
        })
    }

    /// Reads CSV with header `user_id,item_id,rating`.
    pub fn from_reader<R: Read>(input: R, rating_max: f64) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let ratings = reader
            .deserialize()
            .collect::<std::result::Result<Vec<Rating>, _>>()?;
        Self::new(ratings, rating_max)
    }

    pub fn load(path: impl AsRef<Path>, rating_max: f64) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?, rating_max)
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn rating_max(&self) -> f64 {
        self.rating_max
    }
}

/// Reads an assignment CSV (`user_id,cluster` or `item_id,cluster`; the
/// header names are not checked).
pub fn load_assignments(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    read_assignments(std::fs::File::open(path)?)
}

pub fn read_assignments<R: Read>(input: R) -> Result<Vec<(String, String)>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::Malformed(format!(
                "assignment row {:?} needs exactly two fields",
                record
            )));
        }
        out.push((record[0].to_string(), record[1].to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterMode {
    /// Cluster labels supplied per user and per item.
    External {
        users: Vec<(String, String)>,
        items: Vec<(String, String)>,
    },
    /// Alternating k-means on the rating matrix, seeded.
    AlternatingKmeans,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub n_user_clusters: usize,
    pub n_item_clusters: usize,
    pub mode: ClusterMode,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestMetadata {
    /// `(category, type)` cells with no observed rating, filled with the
    /// global mean ratio.
    pub imputed_cells: Vec<(String, String)>,
    pub global_mean_ratio: f64,
    pub noise_std: f64,
    /// Co-clustering objective after every half-step (k-means mode only).
    pub objective_trace: Vec<f64>,
    pub user_clusters: BTreeMap<String, String>,
    pub item_clusters: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub instance: Instance,
    pub metadata: IngestMetadata,
}

/// Dense view of the ratings: users and items in sorted id order.
struct Indexed {
    users: Vec<String>,
    items: Vec<String>,
    /// `(user, item, rating)`
    triples: Vec<(usize, usize, f64)>,
    by_user: Vec<Vec<(usize, f64)>>,
    by_item: Vec<Vec<(usize, f64)>>,
}

impl Indexed {
    fn new(table: &RatingsTable) -> Self {
        let users: Vec<String> = table
            .ratings
            .iter()
            .map(|r| r.user_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let items: Vec<String> = table
            .ratings
            .iter()
            .map(|r| r.item_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let ui: HashMap<&str, usize> =
            users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let ii: HashMap<&str, usize> =
            items.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let triples: Vec<(usize, usize, f64)> = table
            .ratings
            .iter()
            .map(|r| (ui[r.user_id.as_str()], ii[r.item_id.as_str()], r.rating))
            .collect();
        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        for &(u, i, r) in &triples {
            by_user[u].push((i, r));
            by_item[i].push((u, r));
        }
        by_user.iter_mut().for_each(|v| v.sort_by_key(|e| e.0));
        by_item.iter_mut().for_each(|v| v.sort_by_key(|e| e.0));
        Self {
            users,
            items,
            triples,
            by_user,
            by_item,
        }
    }
}

/// Block means `[user cluster][item cluster]`; `None` for empty blocks.
fn block_means(
    data: &Indexed,
    user_of: &[usize],
    item_of: &[usize],
    n_u: usize,
    n_i: usize,
) -> Vec<Vec<Option<f64>>> {
    let mut sum = vec![vec![0.0; n_i]; n_u];
    let mut cnt = vec![vec![0u64; n_i]; n_u];
    for &(u, i, r) in &data.triples {
        sum[user_of[u]][item_of[i]] += r;
        cnt[user_of[u]][item_of[i]] += 1;
    }
    sum.into_iter()
        .zip(cnt)
        .map(|(s, c)| {
            s.into_iter()
                .zip(c)
                .map(|(s, c)| (c > 0).then(|| s / c as f64))
                .collect()
        })
        .collect()
}

fn fill(means: &[Vec<Option<f64>>], fallback: f64) -> Vec<Vec<f64>> {
    means
        .iter()
        .map(|row| row.iter().map(|m| m.unwrap_or(fallback)).collect())
        .collect()
}

fn objective(data: &Indexed, user_of: &[usize], item_of: &[usize], mu: &[Vec<f64>]) -> f64 {
    data.triples
        .iter()
        .map(|&(u, i, r)| (r - mu[user_of[u]][item_of[i]]).powi(2))
        .sum()
}

/// Moves each row to the cluster with the smallest squared error against the
/// fixed block means, never emptying a cluster. `neighbours[row]` lists
/// `(other index, rating)` and `other_of` maps the other side to clusters.
/// Returns true if anything moved.
fn reassign(
    assign: &mut [usize],
    sizes: &mut [usize],
    neighbours: &[Vec<(usize, f64)>],
    other_of: &[usize],
    cost_mean: impl Fn(usize, usize) -> f64,
) -> bool {
    let n_clusters = sizes.len();
    let mut moved = false;
    for (row, obs) in neighbours.iter().enumerate() {
        let current = assign[row];
        if sizes[current] == 1 {
            continue;
        }
        let cost = |g: usize| -> f64 {
            obs.iter()
                .map(|&(o, r)| (r - cost_mean(g, other_of[o])).powi(2))
                .sum()
        };
        let mut best = current;
        let mut best_cost = cost(current);
        for g in 0..n_clusters {
            let c = cost(g);
            if c < best_cost {
                best = g;
                best_cost = c;
            }
        }
        if best != current {
            sizes[current] -= 1;
            sizes[best] += 1;
            assign[row] = best;
            moved = true;
        }
    }
    moved
}

/// Squared distance between two sparse rating rows (sorted by index), with
/// unobserved entries read as `fill`.
fn sparse_distance(a: &[(usize, f64)], b: &[(usize, f64)], fill: f64) -> f64 {
    let (mut i, mut j, mut d) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        let (x, y) = match (a.get(i), b.get(j)) {
            (Some(&(ia, ra)), Some(&(ib, rb))) if ia == ib => {
                i += 1;
                j += 1;
                (ra, rb)
            }
            (Some(&(ia, ra)), Some(&(ib, _))) if ia < ib => {
                i += 1;
                (ra, fill)
            }
            (Some(&(_, ra)), None) => {
                i += 1;
                (ra, fill)
            }
            (_, Some(&(_, rb))) => {
                j += 1;
                (fill, rb)
            }
            (None, None) => unreachable!(),
        };
        d += (x - y) * (x - y);
    }
    d
}

/// k-means++ seeding on the raw rating rows; every row joins its nearest
/// seed and each seed keeps its own cluster, so none starts empty.
fn initial_assignment(
    rows: &[Vec<(usize, f64)>],
    k: usize,
    fill: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let n = rows.len();
    let mut seeds = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = rows
        .iter()
        .map(|r| sparse_distance(r, &rows[seeds[0]], fill))
        .collect();
    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (row, &d) in nearest.iter().enumerate() {
                if d > 0.0 && u < d {
                    chosen = row;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            let free: Vec<usize> = (0..n).filter(|r| !seeds.contains(r)).collect();
            free[rng.random_range(0..free.len())]
        };
        seeds.push(pick);
        for (row, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sparse_distance(&rows[row], &rows[pick], fill));
        }
    }
    let mut assign: Vec<usize> = rows
        .iter()
        .map(|r| {
            let mut best = (0, f64::INFINITY);
            for (g, &s) in seeds.iter().enumerate() {
                let d = sparse_distance(r, &rows[s], fill);
                if d < best.1 {
                    best = (g, d);
                }
            }
            best.0
        })
        .collect();
    for (g, &s) in seeds.iter().enumerate() {
        assign[s] = g;
    }
    assign
}

/// Relabels clusters by the smallest member index so labels do not depend on
/// the random initialisation.
fn canonical_labels(assign: &mut [usize], k: usize) {
    let mut first = vec![usize::MAX; k];
    for (row, &g) in assign.iter().enumerate() {
        first[g] = first[g].min(row);
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&g| first[g]);
    let mut relabel = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    assign.iter_mut().for_each(|g| *g = relabel[*g]);
}

fn kmeans(
    data: &Indexed,
    n_u: usize,
    n_i: usize,
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let global = data.triples.iter().map(|t| t.2).sum::<f64>() / data.triples.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut user_of = initial_assignment(&data.by_user, n_u, global, &mut rng);
    let mut item_of = initial_assignment(&data.by_item, n_i, global, &mut rng);
    let mut user_sizes = vec![0; n_u];
    user_of.iter().for_each(|&g| user_sizes[g] += 1);
    let mut item_sizes = vec![0; n_i];
    item_of.iter().for_each(|&g| item_sizes[g] += 1);

    let mut mu = fill(&block_means(data, &user_of, &item_of, n_u, n_i), global);
    let mut trace = vec![objective(data, &user_of, &item_of, &mu)];
    for _ in 0..KMEANS_MAX_ITERS {
        let moved_u = reassign(&mut user_of, &mut user_sizes, &data.by_user, &item_of, |g, h| {
            mu[g][h]
        });
        mu = fill(&block_means(data, &user_of, &item_of, n_u, n_i), global);
        trace.push(objective(data, &user_of, &item_of, &mu));
        let moved_i = reassign(&mut item_of, &mut item_sizes, &data.by_item, &user_of, |h, g| {
            mu[g][h]
        });
        mu = fill(&block_means(data, &user_of, &item_of, n_u, n_i), global);
        trace.push(objective(data, &user_of, &item_of, &mu));
        if !moved_u && !moved_i {
            break;
        }
    }
    canonical_labels(&mut user_of, n_u);
    canonical_labels(&mut item_of, n_i);
    (user_of, item_of, trace)
}

/// Maps external labels onto cluster indices (labels sorted; numeric labels
/// compare numerically).
fn external(
    ids: &[String],
    pairs: &[(String, String)],
    expected: usize,
    what: &'static str,
) -> Result<(Vec<usize>, Vec<String>)> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
    let mut label_of: Vec<Option<&str>> = vec![None; ids.len()];
    for (id, label) in pairs {
        let &row = index.get(id.as_str()).ok_or_else(|| Error::UnknownId {
            what,
            id: id.clone(),
        })?;
        label_of[row] = Some(label.as_str());
    }
    let mut labels: Vec<&str> = pairs.iter().map(|p| p.1.as_str()).collect();
    labels.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    });
    labels.dedup();
    if labels.len() != expected {
        return Err(Error::EmptyCluster(format!(
            "{} {what} clusters assigned, {expected} expected",
            labels.len()
        )));
    }
    let lookup: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let assign = label_of
        .iter()
        .zip(ids)
        .map(|(l, id)| {
            l.map(|l| lookup[l]).ok_or_else(|| Error::UnknownId {
                what: if what == "user" {
                    "user without a cluster"
                } else {
                    "item without a cluster"
                },
                id: id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((assign, labels.into_iter().map(String::from).collect()))
}

/// Aggregates a ratings table into an instance: item clusters become
/// categories, user clusters become types.
pub fn ingest_ratings(table: &RatingsTable, config: &IngestConfig) -> Result<Ingested> {
    let (n_u, n_i) = (config.n_user_clusters, config.n_item_clusters);
    if n_u == 0 || n_i == 0 {
        return Err(Error::InvalidArgument("cluster counts must be positive".into()));
    }
    if !(config.noise_std >= 0.0 && config.noise_std.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise std {} must be finite and nonnegative",
            config.noise_std
        )));
    }
    let data = Indexed::new(table);
    let (user_of, item_of, trace, user_names, item_names) = match &config.mode {
        ClusterMode::External { users, items } => {
            let (u, un) = external(&data.users, users, n_u, "user")?;
            let (i, inames) = external(&data.items, items, n_i, "item")?;
            (u, i, Vec::new(), un, inames)
        }
        ClusterMode::AlternatingKmeans => {
            if data.users.len() < n_u {
                return Err(Error::EmptyCluster(format!(
                    "{} users cannot fill {n_u} clusters",
                    data.users.len()
                )));
            }
            if data.items.len() < n_i {
                return Err(Error::EmptyCluster(format!(
                    "{} items cannot fill {n_i} clusters",
                    data.items.len()
                )));
            }
            let (u, i, t) = kmeans(&data, n_u, n_i, config.seed);
            let un = (1..=n_u).map(|g| format!("m{g}")).collect();
            let inames = (1..=n_i).map(|h| format!("k{h}")).collect();
            (u, i, t, un, inames)
        }
    };

    let rmax = table.rating_max;
    let global_mean_ratio =
        data.triples.iter().map(|t| t.2).sum::<f64>() / data.triples.len() as f64 / rmax;
    let means = block_means(&data, &user_of, &item_of, n_u, n_i);
    let mut noise = NormalSampler::new(config.seed);
    let mut imputed_cells = Vec::new();
    let mut prefs = vec![vec![0.0; n_u]; n_i];
    for (h, row) in prefs.iter_mut().enumerate() {
        for (g, cell) in row.iter_mut().enumerate() {
            let base = match means[g][h] {
                Some(m) => m / rmax,
                None => {
                    imputed_cells.push((item_names[h].clone(), user_names[g].clone()));
                    global_mean_ratio
                }
            };
            let jitter = if config.noise_std > 0.0 {
                config.noise_std * noise.sample()
            } else {
                0.0
            };
            *cell = (base + jitter).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        }
    }
    let mut sizes = vec![0usize; n_u];
    user_of.iter().for_each(|&g| sizes[g] += 1);
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(format!("user cluster {}", user_names[g])));
    }
    let mut item_sizes = vec![0usize; n_i];
    item_of.iter().for_each(|&h| item_sizes[h] += 1);
    if let Some(h) = item_sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyCluster(format!("item cluster {}", item_names[h])));
    }
    let total = data.users.len() as f64;
    let prior: Vec<f64> = sizes.iter().map(|&s| s as f64 / total).collect();

    let instance = Instance::new(item_names.clone(), user_names.clone(), prefs, prior)?;
    let metadata = IngestMetadata {
        imputed_cells,
        global_mean_ratio,
        noise_std: config.noise_std,
        objective_trace: trace,
        user_clusters: data
            .users
            .iter()
            .zip(&user_of)
            .map(|(u, &g)| (u.clone(), user_names[g].clone()))
            .collect(),
        item_clusters: data
            .items
            .iter()
            .zip(&item_of)
            .map(|(i, &h)| (i.clone(), item_names[h].clone()))
            .collect(),
    };
    Ok(Ingested { instance, metadata })
}
