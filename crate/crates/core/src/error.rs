use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an input contract (shape, symmetry, tag).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A user-facing parameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("row {row} of the distance matrix has no positive off-diagonal entry")]
    DegenerateRow { row: usize },

    #[error(
        "row {row}: perplexity target not reachable (entropy {entropy} bits, target {target} bits)"
    )]
    PerplexityUnreachable {
        row: usize,
        entropy: f64,
        target: f64,
    },

    #[error("node {node} has no outgoing kernel mass under the unitary out-degree prior")]
    IsolatedNode { node: usize },

    #[error("kernel matrix has zero total mass")]
    DegenerateKernel,

    #[error("loss is not finite at the initial embedding")]
    NonFiniteInit,

    #[error("optimization diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, with stage wrappers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 parameter, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Parameter(_) | Error::Contract(_) => 2,
            Error::NoConvergence { .. } | Error::NonFiniteInit | Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
