use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("insufficient servers: need at least {needed}, have {available}")]
    InsufficientServers { needed: usize, available: usize },

    #[error("accuracy bound hypothesis violated: secret bound r = {r} exceeds truncation bound m = {m}")]
    HypothesisViolated { r: f64, m: f64 },

    #[error("truncated noise sampler gave up after {attempts} rejected draws (alpha too small?)")]
    SamplingExhausted { attempts: u64 },

    #[error("format error in {field}: {detail}")]
    Format { field: &'static str, detail: String },

    #[error("protocol failure: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            field,
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad user input rather than a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidArgument(_)
                | Error::Singular(_)
                | Error::InsufficientServers { .. }
                | Error::HypothesisViolated { .. }
                | Error::Format { .. }
        )
    }
}
