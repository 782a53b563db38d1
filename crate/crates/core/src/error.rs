use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum CsrmsError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("format error at byte {offset}: {detail}")]
    Format { offset: usize, detail: String },

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid config field `{field}`: {detail}")]
    Config { field: String, detail: String },

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CsrmsError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        CsrmsError::Dimension { op, detail: detail.into() }
    }

    pub(crate) fn config(field: &str, detail: impl Into<String>) -> Self {
        CsrmsError::Config { field: field.to_string(), detail: detail.into() }
    }
}

pub type Result<T> = std::result::Result<T, CsrmsError>;
