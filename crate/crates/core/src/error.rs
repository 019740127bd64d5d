use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate id {id:?} on lines {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },

    #[error("unterminated block comment starting at byte {offset}")]
    UnterminatedComment { offset: usize },

    #[error("unbalanced brace at byte {offset}")]
    UnbalancedBrace { offset: usize },

    #[error("pattern set: {0}")]
    PatternSet(String),

    #[error("record {id:?} is missing a {label} label")]
    Unlabeled { id: String, label: &'static str },

    #[error("chi-square test undefined: {0}")]
    DegenerateTable(String),

    #[error("vocabulary size {requested} too small; minimum is {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },

    #[error("unknown token id {0}")]
    UnknownTokenId(u32),

    #[error("tokenizer files: {0}")]
    TokenizerFormat(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("record {id:?} has {len} tokens, above the model maximum {max_len}")]
    SequenceTooLong { id: String, len: usize, max_len: usize },

    #[error("class weights undefined: {0}")]
    SingleClass(String),

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("length mismatch: {predictions} predictions vs {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },

    #[error("report is missing cell {0}")]
    MissingCell(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than internal failures.
    pub fn is_input_error(&self) -> bool {
        use std::io::ErrorKind;
        match self {
            Error::Io { source, .. } => matches!(
                source.kind(),
                ErrorKind::NotFound | ErrorKind::PermissionDenied | ErrorKind::InvalidData
            ),
            Error::Csv(_) => false,
            _ => true,
        }
    }
}
