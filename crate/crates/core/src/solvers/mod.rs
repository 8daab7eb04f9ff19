//! Optimal-policy computation.
//!
//! * [`solve_bnb`]: anytime branch-and-bound with an `epsilon` certificate.
//! * [`solve_dp`]: exact `H`-round optimum over category multisets.
//! * [`solve_bruteforce`]: exhaustive `K^H` enumeration, used as an oracle.
//! * [`policy_myopic`], [`policy_bfa`]: the heuristic baselines.

mod baselines;
mod bnb;
mod dp;

pub use baselines::{
    policy_bfa, policy_myopic, solve_bruteforce, solve_bruteforce_from, BRUTE_FORCE_BUDGET,
};
pub use bnb::{
    solve_bnb, solve_bnb_from, BnbOptions, QueueDiscipline, SolveResult, DEPTH_SLACK,
};
pub use dp::{dp_state_count, solve_dp, solve_dp_from, HorizonSolution, DP_STATE_BUDGET};
