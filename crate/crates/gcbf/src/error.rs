use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{}: no surface normals for {missing} of {total} vertices", path.display())]
    MissingNormals {
        path: PathBuf,
        missing: usize,
        total: usize,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] gcbf_core::Error),
}

impl IoError {
    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn format(path: &std::path::Path, msg: impl Into<String>) -> Self {
        IoError::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }

    /// `2` for bad input or arguments, `3` for numerical or output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            IoError::Write { .. } => 3,
            IoError::Core(
                gcbf_core::Error::NotPositiveDefinite { .. }
                | gcbf_core::Error::SingularPoint { .. },
            ) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = IoError> = std::result::Result<T, E>;
