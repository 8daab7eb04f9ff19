//! Best-first / FIFO branch-and-bound over category prefixes.
//!
//! A node is a prefix together with its walk state (end belief, survival
//! probability, likes accumulated so far). The incumbent is the best lower
//! bound seen on a popped node; a child is queued only when its upper bound
//! beats the incumbent by more than `epsilon`. Every child that is not
//! queued contributes its upper bound to the returned certificate, so
//! `value <= V* <= upper_certificate` holds on exit.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Belief, Instance};
use crate::valuation::{horizon_for_epsilon, Policy, PrefixBounds};

/// Extra depth allowed beyond `H(epsilon)` before children are no longer
/// queued.
pub const DEPTH_SLACK: usize = 8;

/// Order in which queued prefixes are popped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueueDiscipline {
    /// Largest upper bound first; ties in insertion order.
    #[default]
    BestFirst,
    /// Plain queue, in insertion order.
    Fifo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbOptions {
    pub epsilon: f64,
    pub queue: QueueDiscipline,
    /// Maximum number of popped nodes; `None` is unlimited.
    pub node_budget: Option<u64>,
    /// Worker threads used to evaluate children. 1 keeps the expansion
    /// order fully sequential.
    pub workers: usize,
}

impl BnbOptions {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            queue: QueueDiscipline::BestFirst,
            node_budget: None,
            workers: 1,
        }
    }

    pub fn with_queue(mut self, queue: QueueDiscipline) -> Self {
        self.queue = queue;
        self
    }

    pub fn with_node_budget(mut self, budget: u64) -> Self {
        self.node_budget = Some(budget);
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }
}

/// Output of [`solve_bnb`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub prefix: Vec<usize>,
    /// Lower bound of `prefix`; within `epsilon` of the optimum.
    pub value: f64,
    /// Proven upper bound on the optimal value.
    pub upper_certificate: f64,
    pub nodes_expanded: u64,
    pub wall_time: Duration,
    /// `prefix` followed by the best fixed category at its end belief.
    pub extended_policy: Policy,
}

impl SolveResult {
    /// Category recommended in the first round.
    pub fn first_action(&self) -> usize {
        self.extended_policy.action_at(1)
    }

    pub fn certificate_gap(&self) -> f64 {
        self.upper_certificate - self.value
    }
}

/// Solves from the instance prior.
pub fn solve_bnb(instance: &Instance, options: &BnbOptions) -> Result<SolveResult> {
    solve_bnb_from(instance, instance.prior(), options)
}

/// Solves from an arbitrary start belief.
pub fn solve_bnb_from(
    instance: &Instance,
    start: &Belief,
    options: &BnbOptions,
) -> Result<SolveResult> {
    instance.check_belief(start)?;
    let epsilon = options.epsilon;
    let depth_cap = horizon_for_epsilon(instance, epsilon)? + DEPTH_SLACK;
    let began = Instant::now();

    let mut search = Search::new(instance, start, options.queue);
    let mut expanded: u64 = 0;
    let pool = if options.workers > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(options.workers)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?,
        )
    } else {
        None
    };

    loop {
        let batch = match &pool {
            None => search.pop().into_iter().collect::<Vec<_>>(),
            Some(_) => search.pop_batch(options.workers * 8),
        };
        if batch.is_empty() {
            break;
        }
        expanded += batch.len() as u64;
        if let Some(budget) = options.node_budget {
            if expanded > budget {
                return Err(Error::NodeBudgetExceeded { budget });
            }
        }
        for node in &batch {
            search.refine(node);
        }
        match &pool {
            None => {
                for node in batch {
                    search.branch(node, epsilon, depth_cap)?;
                }
            }
            Some(pool) => {
                let snapshot = search.incumbent;
                let children: Vec<Result<Vec<Child>>> = pool.install(|| {
                    batch
                        .par_iter()
                        .map(|node| node.children(instance, snapshot, epsilon, depth_cap))
                        .collect()
                });
                for (node, kids) in batch.iter().zip(children) {
                    search.admit(node, kids?, epsilon);
                }
            }
        }
    }

    let prefix = search.prefix_of(search.incumbent_id);
    Ok(SolveResult {
        extended_policy: Policy::new(prefix.clone(), search.incumbent_tail),
        prefix,
        value: search.incumbent,
        upper_certificate: search.certificate.max(search.incumbent),
        nodes_expanded: expanded,
        wall_time: began.elapsed(),
    })
}

struct Node {
    id: usize,
    state: PrefixBounds,
}

enum Child {
    /// Upper bound does not clear the pruning threshold (or the child is
    /// past the depth cap).
    Pruned(f64),
    Open(usize, PrefixBounds),
}

impl Node {
    fn children(
        &self,
        instance: &Instance,
        incumbent: f64,
        epsilon: f64,
        depth_cap: usize,
    ) -> Result<Vec<Child>> {
        let mut out = Vec::with_capacity(instance.n_categories());
        for k in 0..instance.n_categories() {
            match self.state.child_upper(instance, k) {
                None => out.push(Child::Pruned(self.state.accumulated)),
                Some(upper) if upper - incumbent > epsilon && self.state.depth < depth_cap => {
                    out.push(Child::Open(k, self.state.extend(instance, k)?))
                }
                Some(upper) => out.push(Child::Pruned(upper)),
            }
        }
        Ok(out)
    }
}

struct HeapEntry {
    upper: f64,
    seq: u64,
    node: Node,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.upper
            .total_cmp(&other.upper)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Frontier {
    Best(BinaryHeap<HeapEntry>),
    Fifo(VecDeque<Node>),
}

struct Search<'a> {
    instance: &'a Instance,
    frontier: Frontier,
    /// (parent id, category) per node; the root is its own parent.
    arena: Vec<(usize, usize)>,
    seq: u64,
    incumbent: f64,
    incumbent_id: usize,
    incumbent_tail: usize,
    certificate: f64,
}

impl<'a> Search<'a> {
    fn new(instance: &'a Instance, start: &Belief, queue: QueueDiscipline) -> Self {
        let root = PrefixBounds::root(instance, start);
        let frontier = match queue {
            QueueDiscipline::BestFirst => Frontier::Best(BinaryHeap::new()),
            QueueDiscipline::Fifo => Frontier::Fifo(VecDeque::new()),
        };
        let mut search = Self {
            instance,
            frontier,
            arena: vec![(0, usize::MAX)],
            seq: 0,
            incumbent: root.bounds.lower,
            incumbent_id: 0,
            incumbent_tail: root.tail,
            certificate: f64::NEG_INFINITY,
        };
        search.push(Node { id: 0, state: root });
        search
    }

    fn push(&mut self, node: Node) {
        match &mut self.frontier {
            Frontier::Best(heap) => {
                self.seq += 1;
                heap.push(HeapEntry {
                    upper: node.state.bounds.upper,
                    seq: self.seq,
                    node,
                });
            }
            Frontier::Fifo(queue) => queue.push_back(node),
        }
    }

    fn pop(&mut self) -> Option<Node> {
        match &mut self.frontier {
            Frontier::Best(heap) => heap.pop().map(|e| e.node),
            Frontier::Fifo(queue) => queue.pop_front(),
        }
    }

    fn pop_batch(&mut self, n: usize) -> Vec<Node> {
        std::iter::from_fn(|| self.pop()).take(n).collect()
    }

    fn refine(&mut self, node: &Node) {
        if self.incumbent < node.state.bounds.lower {
            self.incumbent = node.state.bounds.lower;
            self.incumbent_id = node.id;
            self.incumbent_tail = node.state.tail;
        }
    }

    fn branch(&mut self, node: Node, epsilon: f64, depth_cap: usize) -> Result<()> {
        let kids = node.children(self.instance, self.incumbent, epsilon, depth_cap)?;
        self.admit(&node, kids, epsilon);
        Ok(())
    }

    fn admit(&mut self, parent: &Node, kids: Vec<Child>, epsilon: f64) {
        for kid in kids {
            match kid {
                Child::Pruned(upper) => self.certificate = self.certificate.max(upper),
                Child::Open(k, state) => {
                    // children computed against a stale incumbent get re-checked
                    if state.bounds.upper - self.incumbent > epsilon {
                        let id = self.arena.len();
                        self.arena.push((parent.id, k));
                        self.push(Node { id, state });
                    } else {
                        self.certificate = self.certificate.max(state.bounds.upper);
                    }
                }
            }
        }
    }

    fn prefix_of(&self, mut id: usize) -> Vec<usize> {
        let mut prefix = Vec::new();
        while id != 0 {
            let (parent, k) = self.arena[id];
            prefix.push(k);
            id = parent;
        }
        prefix.reverse();
        prefix
    }
}
