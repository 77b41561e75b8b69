use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how callers are expected to react: `Format`,
/// `Validation` and `Record` come out of loading/validating data files,
/// `Argument`/`NumericDomain` out of misuse of an in-memory operation, and
/// `Io`/`Json` wrap the underlying I/O machinery.
#[derive(Debug, Error)]
pub enum Error {
    /// A data file could not be parsed; `line` is 1-based.
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    /// A table, report or config violates a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A specific record is invalid; the id comes from the offending row.
    #[error("record '{id}': {msg}")]
    Record { id: String, msg: String },

    /// An operation was called with inconsistent arguments (shape, range...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The math is undefined for the given input (zero-norm row etc).
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// A scoring method needs an artifact or column that was not supplied.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// Method name not in the registry.
    #[error("unknown method '{name}'; implemented methods: {known}")]
    UnknownMethod { name: String, known: String },

    /// Method name is recognized but intentionally out of scope.
    #[error("method '{0}' is recognized but not implemented in this library")]
    NotImplemented(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
