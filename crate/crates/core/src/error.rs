use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("rate {rate} exceeds access backlog {backlog}")]
    RateExceedsBacklog { rate: f64, backlog: f64 },

    #[error("incomplete frame: expected {expected} slots, got {got}")]
    IncompleteFrame { expected: usize, got: usize },

    #[error(
        "cone solver stopped with status {status} \
         (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})"
    )]
    SolverFailure {
        status: String,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error(
        "empty zero-forcing null space for UE {ue}: {interferers} interfering channels span \
         {rank} of {antennas} antenna dimensions"
    )]
    EmptyNullSpace {
        ue: usize,
        interferers: usize,
        rank: usize,
        antennas: usize,
    },

    #[error("grid search needs {points} points, budget is {budget}")]
    BudgetExceeded { points: u128, budget: u128 },

    #[error("slot {slot}: {source}")]
    Slot {
        slot: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("trace schema mismatch in {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
