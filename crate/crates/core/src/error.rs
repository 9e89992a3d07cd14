// SPDX-License-Identifier: MIT OR Apache-2.0

use tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("task generation: {0}")]
    Task(String),
    #[error("{mixer} does not expose capture point {site}")]
    UnsupportedAddress { mixer: String, site: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn invalid_document(msg: impl Into<String>) -> Self {
        Self::InvalidDocument(msg.into())
    }

    pub fn task(msg: impl Into<String>) -> Self {
        Self::Task(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
