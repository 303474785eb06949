use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// An exhaustive enumeration would exceed its budget.
    #[error("combinatorial budget exceeded: {required} coalitions to enumerate, budget is {budget}")]
    Budget { required: u128, budget: u64 },

    /// The input lacks something the requested mode needs.
    #[error("capability error: {0}")]
    Capability(String),

    /// A computation produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The quantity is mathematically undefined for this input.
    #[error("undefined result: {0}")]
    Undefined(String),

    #[error(transparent)]
    Container(#[from] ContainerError),

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

/// Parse failures for the HEDT tensor container.
#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("bad magic: expected \"HEDT\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("version mismatch: file has version {found}, reader supports {supported}")]
    VersionMismatch { found: u16, supported: u16 },

    #[error(
        "truncated file while reading {what} of entry {entry:?}: need {needed} bytes, {available} available"
    )]
    Truncated {
        entry: String,
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("entry {entry:?}: unknown dtype code {code}")]
    UnknownDtype { entry: String, code: u8 },

    #[error("entry name is not valid UTF-8 (entry #{index})")]
    BadName { index: usize },

    #[error("duplicate entry name {0:?}")]
    DuplicateName(String),

    #[error("{0} trailing bytes after last entry")]
    TrailingBytes(usize),

    #[error("entry {entry:?}: shape {shape:?} does not match {len} values")]
    ShapeMismatch {
        entry: String,
        shape: Vec<u32>,
        len: usize,
    },

    #[error("missing entry {0:?}")]
    MissingEntry(String),

    #[error("entry {entry:?}: {message}")]
    BadEntry { entry: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
