use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid alphabet: {0}")]
    Alphabet(String),
    #[error("label `{0}` is not a bijection on the vertex set")]
    NotBijective(String),
    #[error("label `{0}` is not injective")]
    NotInjective(String),
    #[error("vertex {vertex} out of range (vertex count {count})")]
    VertexOutOfRange { vertex: u64, count: u64 },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("cannot parse word `{0}`")]
    WordSyntax(String),
    #[error("graph is incomplete (infinite index)")]
    Incomplete,
    #[error("graph is disconnected: vertex {0} is unreachable")]
    Disconnected(u64),
    #[error("label `{0}` has non-loop edges and cannot be pruned")]
    NotLoopLabel(String),
    #[error("voltage on dart ({vertex}, {label}) contradicts the voltage on its reverse dart")]
    InconsistentVoltage { vertex: u64, label: String },
    #[error("invalid voltage permutation: {0}")]
    BadPermutation(String),
    #[error("level {level} exceeds the budget of {budget}")]
    LevelBudget { level: usize, budget: usize },
    #[error("ball of radius {radius} did not stabilize by level {level} (last counts {last:?})")]
    Unstabilized { radius: u32, level: usize, last: [u64; 2] },
    #[error("ball size shrank from {before} to {after} at level {level}; bonding map is not a covering")]
    CoveringViolation { level: usize, before: u64, after: u64 },
    #[error("bonding map from level {0} is not a covering")]
    NotCovering(usize),
    #[error("invalid tower: {0}")]
    Tower(String),
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("taxonomy is not defined for this tower at level {0}")]
    TaxonomyUnsupported(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
