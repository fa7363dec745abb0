use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A geometric object violates its invariants (non-positive axis, ...).
    #[error("invalid geometry: {0}")]
    Geometry(String),

    /// A model parameter violates its domain constraints.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The current parameter point produced a non-finite or non-positive
    /// likelihood term; optimizers treat this as a rejected step.
    #[error("parameter region rejected: {0}")]
    ParamRegion(String),

    /// A data container violates its invariants (shape mismatch, empty, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// The optimizer exhausted its budget without meeting the tolerance.
    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),

    /// A matrix required by an estimator is singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Requested functionality is deliberately not provided.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Ingestion failure with the offending source line when known.
    #[error("ingest error{}: {msg}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Ingest { msg: String, line: Option<u64> },

    /// A pipeline stage failed; partial outputs up to this stage persist.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
