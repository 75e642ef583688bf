use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GdenError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GdenError {
    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("edge ({i}, {j}) has an endpoint outside [0, {n})")]
    EndpointOutOfRange { i: usize, j: usize, n: usize },

    #[error("edge ({i}, {j}) has non-positive or non-finite weight {weight}")]
    InvalidWeight { i: usize, j: usize, weight: f64 },

    #[error("adjacency is not symmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },

    #[error("node {node} has zero degree; add self-loops before using a degree-normalized operator")]
    ZeroDegree { node: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("alpha = {alpha} is outside the legal range {range} for {kind}")]
    AlphaOutOfRange {
        kind: &'static str,
        alpha: f64,
        range: &'static str,
    },

    #[error("solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("solver encountered NaN at iteration {iteration}")]
    SolverNaN { iteration: usize },

    #[error("n = {n} exceeds the dense cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("{}:{line}: {msg}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
