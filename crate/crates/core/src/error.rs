use alloc::string::String;

/// Errors raised by the self-training core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("edge record {index} has an endpoint outside [0, {n})")]
    EdgeOutOfRange { index: usize, n: usize },
    #[error("label vector has {len} entries but the graph has {n} nodes")]
    LabelLength { len: usize, n: usize },
    #[error("label {label} of node {index} is outside [0, {classes})")]
    LabelOutOfRange { index: usize, label: usize, classes: usize },
    #[error("graph carries no ground-truth labels")]
    MissingLabels,
    #[error("node {0} is out of range")]
    NodeOutOfRange(usize),
    #[error("hop count must be at least 1")]
    InvalidHop,
    #[error("soft label of node {0} has zero norm or a negative entry")]
    InvalidSoftLabel(usize),
    #[error("homophily ratio {value} at position {index} is outside [0, 1]")]
    RatioOutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0} has zero total mass")]
    ZeroTotal(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training requires at least one clean labeled node")]
    EmptyCleanSet,
    #[error("selection loss diverged in the {term} term at iteration {iteration}")]
    SelectionDiverged { term: &'static str, iteration: usize },
    #[error("training diverged at stage {stage}")]
    TrainingDiverged { stage: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
