use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("topology: {0}")]
    Topology(String),

    #[error(transparent)]
    Protocol(#[from] codedcast_core::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl SimError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
