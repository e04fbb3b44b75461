//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for graph construction, model fitting, counterfactual
/// evaluation, attribution and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cycle detected involving node '{0}'")]
    CycleDetected(String),

    #[error("node '{node}' references unknown parent '{parent}'")]
    DanglingParent { node: String, parent: String },

    #[error("graph has more than one sink or unreachable nodes: {0:?}")]
    MultipleSinks(Vec<String>),

    #[error("duplicate node name '{0}'")]
    DuplicateNode(String),

    #[error("unknown node '{0}'")]
    UnknownNode(String),

    #[error("invalid node spec for '{node}': {detail}")]
    InvalidNode { node: String, detail: String },

    #[error("no analytic function registered under key '{0}'")]
    UnknownAnalytic(String),

    #[error("missing data column for node '{0}'")]
    MissingColumn(String),

    #[error("day {t} lacks the required history (needs {required} prior days)")]
    InsufficientHistory { t: usize, required: usize },

    #[error(
        "insufficient data: {rows} usable rows for {features} features (need at least {needed})"
    )]
    InsufficientData {
        rows: usize,
        features: usize,
        needed: usize,
    },

    #[error("singular design matrix; features are collinear or constant")]
    SingularDesign,

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{n} inputs exceed the exact-enumeration cap of {max}")]
    TooManyInputs { n: usize, max: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("non-positive query volume{}", .0.as_ref().map(|s| format!(" ({s})")).unwrap_or_default())]
    NonPositiveVolume(Option<String>),

    #[error("panel schema mismatch at line {line}: {detail}")]
    SchemaMismatch { line: usize, detail: String },

    #[error("gap in days for category '{category}': expected day {expected}, found {found}")]
    GapInDays {
        category: String,
        expected: usize,
        found: usize,
    },

    #[error("input '{0}' has no category mapping")]
    UnmappedInput(String),

    #[error("degenerate intervention selection: first and second category coincide ('{0}')")]
    DegenerateSelection(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
