use thiserror::Error;

use crate::model::SurvivalTree;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Best tree known when a time limit interrupted the search.
#[derive(Debug, Clone)]
pub struct Incumbent {
    pub tree: SurvivalTree,
    pub loss: f64,
    pub optimal: bool,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid instance {index}: {reason}")]
    InvalidInstance { index: usize, reason: String },
    #[error("feature index {feature} out of range for {count} features")]
    FeatureOutOfRange { feature: usize, count: usize },
    #[error("dataset has no baseline hazard attached")]
    MissingBaseline,
    #[error("leaf has no hazard mass (hazard sum is zero)")]
    DegenerateLeaf,
    #[error("{0} is undefined: {1}")]
    UndefinedMetric(&'static str, String),
    #[error("censoring survival estimate is zero at t = {time}")]
    ZeroCensoringWeight { time: f64 },
    #[error("time limit exceeded; incumbent loss {}", .0.loss)]
    TimeLimit(Box<Incumbent>),
    #[error("cache has no optimal entry for subproblem (depth {depth}, nodes {nodes})")]
    CacheMiss { depth: u32, nodes: u32 },
    #[error("missing value in row {row}, column `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("row {row} has {found} values, schema expects {expected}")]
    RowWidth { row: usize, expected: usize, found: usize },
    #[error("column `{column}` value `{value}` in row {row} is not numeric")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("binarization removed every predicate")]
    DegenerateFeatureSpace,
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("fold {fold} has no events ({reason}); resample folds with a different seed")]
    FoldWithoutEvents { fold: usize, reason: &'static str },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        Error::Csv { line, reason: err.to_string() }
    }
}
