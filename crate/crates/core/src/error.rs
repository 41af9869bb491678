use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: cannot parse {token:?} as a node id")]
    Parse { line: usize, token: String },

    #[error("edge list contains no edges")]
    EmptyGraph,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible SBM parameters: intra-community probability {p_in:.4} exceeds 1")]
    InfeasibleSbm { p_in: f64 },

    #[error("dimension mismatch: expected length {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("node {node} is out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("source set is empty")]
    EmptySources,

    #[error("initial condition must be binary, found {value} at node {node}")]
    NonBinaryInitial { node: usize, value: f64 },

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("all flipped edge weights are zero; nothing to partition")]
    DegenerateWeights,

    #[error("no node is predicted healthy at the patching delay; partitioning is pointless")]
    NoHealthyNodes,

    #[error("constraint set must contain at least one infected and one healthy anchor")]
    MissingAnchorLabel,

    #[error("projected power method infeasible: total volume {volume} does not exceed anchor count {anchors}")]
    InfeasibleSphere { volume: f64, anchors: usize },

    #[error("partition side has zero volume")]
    ZeroVolume,

    #[error("nothing to plot: result holds no policies")]
    EmptyPlot,

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed results file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
