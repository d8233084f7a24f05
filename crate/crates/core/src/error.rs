use thiserror::Error;

/// Domain violations raised by the pure game mathematics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
    #[error("player order {own} exceeds aggregate order {aggregate}")]
    OrderExceedsAggregate { own: f64, aggregate: f64 },
    #[error("storage state {state} outside [0, {capacity}]")]
    StateOutOfRange { state: f64, capacity: f64 },
    #[error("action {action} outside feasible interval [{lower}, {upper}]")]
    InfeasibleAction { action: f64, lower: f64, upper: f64 },
    #[error("horizon mismatch: expected {expected} intervals, got {actual}")]
    HorizonMismatch { expected: usize, actual: usize },
    #[error("demand profile {region} is empty")]
    EmptyProfile { region: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("candidate schedule is infeasible: {0}")]
    InfeasibleCandidate(String),
    #[error("internal solver error: {0}")]
    Internal(String),
}

#[derive(Debug, Error)]
pub enum DemandError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: unknown region {name:?}")]
    UnknownRegion { row: usize, name: String },
    #[error("unknown region {0:?}")]
    UnknownRegionName(String),
    #[error("row {row}: duplicate entry for {date} / {region}")]
    Duplicate { row: usize, date: chrono::NaiveDate, region: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("demand data ends on {last}, but coverage through {required} is needed")]
    InsufficientCoverage { last: chrono::NaiveDate, required: chrono::NaiveDate },
    #[error("horizon {start}..{end} does not intersect the profile")]
    EmptyHorizon { start: chrono::NaiveDate, end: chrono::NaiveDate },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("saving undefined: reference cost is zero but game cost is {game_cost}")]
    UndefinedSaving { game_cost: f64 },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: std::path::PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
}
