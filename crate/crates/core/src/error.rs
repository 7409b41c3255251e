use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("edge {0} -> {1} references an undeclared node")]
    DanglingEdge(String, String),

    #[error("active edge set contains a cycle through `{0}`")]
    Cycle(String),

    #[error("unknown switch group `{0}`")]
    UnknownGroup(String),

    #[error("variable sets overlap on `{0}`")]
    Overlap(String),

    #[error("joint table has no cells")]
    EmptyTable,

    #[error("invalid probability table: {0}")]
    InvalidDistribution(String),

    #[error("enumeration needs {needed} cells, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    #[error("unknown environment {0}")]
    UnknownEnvironment(usize),

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("{0}")]
    NotABenchmark(String),

    #[error("phi maps state {state} to {image}, outside cardinality {card}")]
    PhiRange { state: usize, image: usize, card: usize },

    #[error("enumeration over {0} coordinates exceeds the limit of 20")]
    EnumerationBound(usize),

    #[error("no candidate has positive anti-collapse score (best {0:.3e} bits)")]
    NoSelection(f64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("malformed dataset: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.into(), reason: reason.into() }
    }
}
