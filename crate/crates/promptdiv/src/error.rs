//! Crate-wide error type.

use std::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// One failed item inside a batch operation.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ItemFailure {
    /// Identifier of the failed item (prompt id, text hash, ...).
    pub item: String,
    pub message: String,
}

/// Summary of a batch that finished with some items failed.
#[derive(Debug, Clone)]
pub struct PartialFailure {
    pub completed: usize,
    pub total: usize,
    pub failures: Vec<ItemFailure>,
}

impl PartialFailure {
    /// True when nothing at all succeeded.
    pub fn is_total(&self) -> bool {
        self.completed == 0
    }
}

impl fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.is_total() { "total" } else { "partial" };
        write!(
            f,
            "{} failure: {}/{} items completed; failed: ",
            kind, self.completed, self.total
        )?;
        for (i, fail) in self.failures.iter().take(5).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{} ({})", fail.item, fail.message)?;
        }
        if self.failures.len() > 5 {
            write!(f, ", ... {} more", self.failures.len() - 5)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    #[error("{path}:{line}: duplicate id \"{id}\"")]
    DuplicateId { path: String, line: u64, id: String },

    #[error("{path}: file contains no records")]
    EmptyFile { path: String },

    /// Configuration or domain-validation failure (maps to exit code 2).
    #[error("{0}")]
    Invalid(String),

    #[error("HTTP {status} from {url}: {body}")]
    Http { url: String, status: u16, body: String },

    #[error("transport error contacting {url}: {msg}")]
    Transport { url: String, msg: String },

    #[error("malformed response from {url}: {msg}")]
    Response { url: String, msg: String },

    #[error("{0}")]
    Metric(String),

    #[error("{0}")]
    Partial(PartialFailure),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn metric(msg: impl Into<String>) -> Self {
        Error::Metric(msg.into())
    }

    /// True for errors caused by bad configuration or invalid input files,
    /// as opposed to runtime failures against an endpoint.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::DuplicateId { .. }
                | Error::EmptyFile { .. }
                | Error::Invalid(_)
        )
    }
}
