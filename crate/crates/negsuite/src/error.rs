use std::path::{Path, PathBuf};

use negsuite_core::diagnostics::DiagnosticsError;
use negsuite_core::embedding::EmbeddingError;
use negsuite_core::eval::EvalError;
use negsuite_core::synthesis::SynthesisError;
use negsuite_core::toyworld::ToyError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{}:{line}: dimension mismatch, expected {expected} got {found}", path.display())]
    DimMismatch { path: PathBuf, line: usize, expected: usize, found: usize },
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Contract(String),
    #[error("hook failed: {0}")]
    Hook(String),
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Internal(String),
}

impl Error {
    /// 2 for malformed input, 3 for contract violations, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Format { .. } | Error::DimMismatch { .. } | Error::Input(_) => 2,
            Error::Contract(_) => 3,
            Error::Hook(_) | Error::Write { .. } | Error::Internal(_) => 1,
        }
    }

    pub fn format(path: &Path, line: usize, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), line, message: message.into() }
    }

    pub fn read(path: &Path, e: std::io::Error) -> Self {
        Error::Input(format!("cannot read {}: {e}", path.display()))
    }
}

impl From<SynthesisError> for Error {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Paraphrase(m) => Error::Hook(m),
            e => Error::Contract(e.to_string()),
        }
    }
}

impl From<EvalError> for Error {
    fn from(e: EvalError) -> Self {
        Error::Contract(e.to_string())
    }
}

impl From<DiagnosticsError> for Error {
    fn from(e: DiagnosticsError) -> Self {
        Error::Contract(e.to_string())
    }
}

impl From<EmbeddingError> for Error {
    fn from(e: EmbeddingError) -> Self {
        Error::Contract(e.to_string())
    }
}

impl From<ToyError> for Error {
    fn from(e: ToyError) -> Self {
        match e {
            ToyError::Config(_) => Error::Input(e.to_string()),
            ToyError::DivergedLoss(_) => Error::Internal(e.to_string()),
            e => Error::Contract(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
