//! Error type shared by all toolkit modules.

use thiserror::Error;

/// Errors produced by the toolkit.
///
/// The variants mirror the failure classes of the public operations:
/// `Argument` for caller mistakes (bad flags, out-of-range parameters),
/// `Validation` for inputs that parse but violate a data invariant,
/// `Format` for byte-level problems in binary files, and `Parse` for
/// malformed JSON with the byte offset of the failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("argument error: {0}")]
    Argument(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Build a `Parse` error from a serde_json error and the raw text it was
    /// parsing, converting serde's 1-based line/column into a byte offset.
    pub fn from_json(err: &serde_json::Error, text: &str) -> Self {
        let line = err.line();
        let column = err.column();
        let offset = byte_offset(text, line, column);
        Error::Parse {
            offset,
            line,
            column,
            message: err.to_string(),
        }
    }
}

/// Convert serde_json's 1-based (line, column) into a 0-based byte offset.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut remaining = line - 1;
    let mut start = 0;
    for (idx, b) in text.bytes().enumerate() {
        if remaining == 0 {
            break;
        }
        if b == b'\n' {
            remaining -= 1;
            start = idx + 1;
        }
    }
    (start + column.saturating_sub(1)).min(text.len())
}

pub type Result<T> = std::result::Result<T, Error>;
