use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a structural requirement (length, finiteness, ordering).
    #[error("validation error: {0}")]
    Validation(String),

    /// Intermediate orders or other tuning parameters are out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// An index into an ordered sample is out of range.
    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },

    /// A function argument lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Too few exceedances above the threshold to form an estimate.
    #[error("insufficient exceedances: {found} found, {required} required ({context})")]
    InsufficientExceedances {
        found: usize,
        required: usize,
        context: String,
    },

    /// The estimated dependence makes a normalizer vanish or turn negative.
    #[error("degenerate dependence: {0}")]
    Degenerate(String),

    /// Quadrature or another numerical routine failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A single bootstrap replicate failed.
    #[error("bootstrap replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    /// Malformed input file content.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: u64, column: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    ///
    /// 2 for validation problems, 3 for numerical or degeneracy failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) | Error::Index { .. } | Error::Parse { .. } => 2,
            Error::Domain(_) | Error::InsufficientExceedances { .. } | Error::Degenerate(_) | Error::Numerical(_) => 3,
            Error::Replicate { source, .. } => source.exit_code(),
            Error::Io(_) => 4,
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => 4,
                _ => 2,
            },
            Error::Json(_) => 2,
        }
    }

    /// Copy of an error that keeps its message and exit-code class.
    pub(crate) fn duplicate(&self) -> Error {
        match self {
            Error::Validation(m) => Error::Validation(m.clone()),
            Error::Config(m) => Error::Config(m.clone()),
            Error::Index { index, len } => Error::Index {
                index: *index,
                len: *len,
            },
            Error::Domain(m) => Error::Domain(m.clone()),
            Error::InsufficientExceedances {
                found,
                required,
                context,
            } => Error::InsufficientExceedances {
                found: *found,
                required: *required,
                context: context.clone(),
            },
            Error::Degenerate(m) => Error::Degenerate(m.clone()),
            Error::Numerical(m) => Error::Numerical(m.clone()),
            Error::Replicate { replicate, source } => Error::Replicate {
                replicate: *replicate,
                source: Box::new(source.duplicate()),
            },
            Error::Parse { line, column, message } => Error::Parse {
                line: *line,
                column: column.clone(),
                message: message.clone(),
            },
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), e.to_string())),
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => {
                Error::Io(std::io::Error::other(e.to_string()))
            }
            Error::Csv(e) => Error::Validation(e.to_string()),
            Error::Json(e) => Error::Validation(e.to_string()),
        }
    }

    pub(crate) fn in_replicate(self, replicate: usize) -> Error {
        Error::Replicate {
            replicate,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
