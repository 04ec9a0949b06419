use std::io;

use thiserror::Error;

pub type Result<T, E = DetoxError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DetoxError {
    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("infinite perplexity: token {token} has zero probability at position {position}")]
    InfinitePerplexity { token: u32, position: usize },

    #[error("empty datastore source")]
    EmptyDatastoreSource,

    #[error("cannot retrieve from empty datastore")]
    EmptyDatastore,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("distribution is not normalized (sum = {0})")]
    Unnormalized(f64),

    #[error("empty {0} corpus")]
    EmptyExpertSide(&'static str),

    #[error("backend `{0}` is missing its resources")]
    MissingBackend(String),

    #[error("rate limited after {0} attempts")]
    RateLimited(u32),

    #[error("server returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("unparseable response: {0}")]
    Unparseable(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("missing API key: set {0}")]
    MissingApiKey(&'static str),

    #[error("no scoreable rows")]
    NoScoreableRows,

    #[error("baseline EMT must be positive, got {0}")]
    NonPositiveBaseline(f64),

    #[error("{label} shortfall {shortfall}")]
    Shortfall { label: String, shortfall: usize },

    #[error("too many failures: {failed} of {total} items failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("too many malformed lines in {path}: {malformed} of {total}")]
    MalformedCorpus { path: String, malformed: usize, total: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<DetoxError>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DetoxError {
    pub fn config(msg: impl Into<String>) -> Self {
        DetoxError::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        DetoxError::Format(msg.into())
    }

    /// Wraps an error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        DetoxError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

/// Extension for tagging results with a stage name.
pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
