//! Recommendation planning when users are known only up to an aggregated
//! type and leave after the first disliked recommendation.
//!
//! An [`Instance`] holds a category-by-type like-probability matrix `P` and
//! a prior `q` over types. Showing categories to a user who keeps liking them
//! moves the belief deterministically, so a policy is just a sequence of
//! categories. The crate evaluates such policies in closed form, brackets the
//! optimum between cheap bounds, and finds it with an anytime
//! branch-and-bound search (cross-checked by an exact multiset DP and brute
//! force). Around that core sit convergence diagnostics, Monte Carlo
//! simulation, instance generation, ratings ingestion, a POMDP exporter and
//! a benchmark harness.

pub mod analysis;
pub mod bench;
pub mod error;
pub mod instances;
pub mod model;
pub mod pomdp;
pub mod simulation;
pub mod solvers;
pub mod valuation;

pub use error::{Error, Result};
pub use model::{Belief, BeliefWalk, Instance, InstanceDocument, WalkStep};
pub use solvers::{solve_bnb, solve_dp, BnbOptions, QueueDiscipline, SolveResult};
pub use valuation::{value_fixed, value_policy, Policy};
