use std::fmt;

/// Pipeline stage names used to tag errors raised during an experiment run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    GroundTruth,
    Scheme,
    Simulate,
    Initialize,
    Solve,
    Evaluate,
    Render,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::GroundTruth => "gen-truth",
            Stage::Scheme => "scheme",
            Stage::Simulate => "simulate",
            Stage::Initialize => "init",
            Stage::Solve => "solve",
            Stage::Evaluate => "eval",
            Stage::Render => "plot",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed parameter vector: {0}")]
    MalformedParameter(String),

    #[error("malformed spike train: {0}")]
    MalformedTrain(String),

    #[error("invalid measurement scheme: {0}")]
    InvalidScheme(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid would contain {count} points, exceeding the cap of {cap}")]
    GridCapacity { count: u128, cap: usize },

    #[error("could not place {k} spikes with separation {epsilon} after {attempts} attempts")]
    InfeasiblePacking {
        k: usize,
        epsilon: f64,
        attempts: usize,
    },

    #[error("non-finite {quantity} at iteration {iteration}")]
    NonFinite {
        quantity: &'static str,
        iteration: usize,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
