use std::path::PathBuf;

use crate::fp_codec::FloatFormat;

/// Range violation raised by the reduced-precision emulator under the
/// `signal` overflow policy.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("overflow: {value:e} is outside the range of {format}")]
    Overflow { value: f64, format: FloatFormat },
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid float format: {0}")]
    InvalidFormat(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("protein {protein} ({id}): {source}")]
    Inference {
        protein: usize,
        id: String,
        #[source]
        source: FormatError,
    },

    #[error("malformed model: {0}")]
    Model(String),

    #[error("unknown ontology class `{0}`")]
    UnknownClass(String),

    #[error("malformed ontology: {0}")]
    Ontology(String),

    #[error("no information content for class `{0}`")]
    MissingInformationContent(String),

    #[error("reference value is zero but a sample is not")]
    UndefinedReference,

    #[error("invalid sample set: {0}")]
    Samples(String),

    #[error("campaign provenance mismatch: {0}")]
    ProvenanceMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by malformed or inconsistent inputs.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Format(_) | Error::Inference { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
