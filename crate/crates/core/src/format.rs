//! Errors shared by the line-oriented file formats.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// `record` is the 1-based line (JSONL) or data row (CSV).
    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },
    #[error("schema error at record {record}: {message}")]
    Schema { record: usize, message: String },
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn schema(record: usize, message: impl Into<String>) -> Self {
        Self::Schema {
            record,
            message: message.into(),
        }
    }

    pub(crate) fn parse(record: usize, message: impl ToString) -> Self {
        Self::Parse {
            record,
            message: message.to_string(),
        }
    }
}

/// Iterates non-blank lines of a JSONL file with 1-based line numbers.
pub(crate) fn jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_owned()))
        .collect())
}

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), FormatError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| FormatError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| FormatError::io(path, e))
}
