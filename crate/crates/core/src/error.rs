use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("metric is singular (|det| = {det:e}, threshold {threshold:e})")]
    SingularMetric { det: f64, threshold: f64 },
    #[error("jet order {available} is too low, {needed} required")]
    InsufficientJet { needed: usize, available: usize },
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),
    #[error("point outside the chart domain: {0}")]
    OutOfDomain(String),
    #[error("solution is proportional to the metric; B is undetermined")]
    ProportionalSolution,
    #[error("no projector: {0}")]
    NoProjector(String),
    #[error("projector has mu = {mu} outside [0, 1]")]
    InconsistentProjector { mu: f64 },
    #[error("degenerate metric: {0}")]
    Degenerate(String),
    #[error("finite differences do not support derivative order {0}")]
    FiniteDifferenceOrder(usize),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
