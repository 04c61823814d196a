use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed JSON: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: missing required field \"{field}\"")]
    MissingField { line: usize, field: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("empty corpus after pruning")]
    EmptyCorpus,

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),

    #[error("degenerate word probability in document {doc}")]
    DegenerateWordProbability { doc: usize },

    #[error("dispersion undefined for a single cluster")]
    DispersionUndefined,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("missing estimate for author {0}")]
    MissingAuthor(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("outer iteration {iteration}: {source}")]
    OuterIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all restarts failed: {0}")]
    AllRestartsFailed(String),

    #[error("all candidate cluster counts failed")]
    AllCandidatesFailed,
}

pub type Result<T> = std::result::Result<T, Error>;
