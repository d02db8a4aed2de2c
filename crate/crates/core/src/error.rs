use thiserror::Error;

/// Errors surfaced by every stage of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("under-resolved scale: {0}")]
    UnderResolved(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error("solver failure in {stage}: {iterations} iterations, residual {residual:.3e}")]
    SolverFailure {
        stage: String,
        iterations: usize,
        residual: f64,
    },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Wraps the error with the name of the stage that produced it.
    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage and step wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } | Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// True for failures of an iterative solver (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(self.root(), Error::SolverFailure { .. })
    }
}
