use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed instance document: {0}")]
    Malformed(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("prior does not sum to 1 (sum = {sum})")]
    PriorNotNormalized { sum: f64 },

    #[error("probability out of range [0, 1]: {what} = {value}")]
    ProbabilityOutOfRange { what: String, value: f64 },

    #[error("p_max = {p_max} >= 1: some fixed policy has infinite expected welfare")]
    InfiniteWelfare { p_max: f64 },

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("a like on category {category} has zero likelihood under the current belief")]
    ZeroLikelihood { category: usize },

    #[error("index {index} out of range for {what} (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("horizon {horizon} exceeds the limit of {limit} rounds")]
    HorizonTooLarge { horizon: f64, limit: usize },

    #[error("node budget of {budget} exceeded")]
    NodeBudgetExceeded { budget: u64 },

    #[error("dynamic program needs {states} states, budget is {budget}")]
    StateBudgetExceeded { states: f64, budget: f64 },

    #[error("brute force needs {sequences} sequences, budget is {budget}")]
    BruteForceBudgetExceeded { sequences: f64, budget: f64 },

    #[error("theorem precondition unmet: {0}")]
    PreconditionUnmet(String),

    #[error("policy did not settle within {rounds} rounds")]
    NotConvergedWithinBudget { rounds: usize },

    #[error("empty simulation")]
    EmptySimulation,

    #[error("session exceeded {cap} rounds")]
    RoundCapExceeded { cap: u64 },

    #[error("cluster {0} is empty")]
    EmptyCluster(String),

    #[error("unknown {what} id `{id}`")]
    UnknownId { what: &'static str, id: String },

    #[error("pomdp file parse error at line {line}: {msg}")]
    PomdpParse { line: usize, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
