use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument or solution does not fit the network.
    #[error("invalid input: {0}")]
    Input(String),

    /// The network itself is malformed (dangling endpoint, duplicate bus id, ...).
    #[error("malformed network: {0}")]
    Network(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema violation: {0}")]
    Schema(String),

    /// The LP backend failed for numerical reasons. Distinct from infeasibility.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A flow/angle pair that no finite susceptance can explain.
    #[error("line {line}: flow {flow} with angle difference {angle_diff} has no valid susceptance")]
    InconsistentFlow { line: usize, flow: f64, angle_diff: f64 },

    #[error("{lines} lines exceed the enumeration limit of {limit}")]
    TooLarge { lines: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
