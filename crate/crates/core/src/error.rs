use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the abstraction and synthesis stack.
///
/// Variants carry enough context to name the offending item (action, layer,
/// state, region) so diagnostics can be read without a debugger.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },
    #[error("dimension mismatch in action '{action}', layer {layer}: {message}")]
    LayerMismatch {
        action: String,
        layer: usize,
        message: String,
    },
    #[error("unsupported activation '{0}' (expected relu, sigmoid, tanh or linear)")]
    UnsupportedActivation(String),
    #[error("unknown action '{0}'")]
    UnknownAction(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("covariance is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),
    #[error("covariance is not positive definite (eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("singular transform")]
    SingularTransform,
    #[error("empty or invalid region: {0}")]
    InvalidRegion(String),
    #[error("region of interest '{0}' is not axis-aligned in transformed coordinates")]
    MisalignedRegion(String),
    #[error("grid: {0}")]
    Grid(String),
    #[error("infeasible transition row (state {source_state}, action {action}): {message}")]
    InfeasibleRow {
        source_state: usize,
        action: usize,
        message: String,
    },
    #[error("automaton: {0}")]
    Automaton(String),
    #[error("automaton transition missing for state '{state}' on label set {{{subset}}}")]
    PartialTransition { state: String, subset: String },
    #[error("unknown proposition '{0}'")]
    UnknownProposition(String),
    #[error("refinement: {0}")]
    Refinement(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
