use thiserror::Error;

use crate::lpcore::LpStatus;

pub type Result<T> = std::result::Result<T, GdsError>;

#[derive(Debug, Error)]
pub enum GdsError {
    #[error("point ({t}, {s}) lies outside the unit square")]
    Domain { t: f64, s: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("linear program ended with status {status:?}: {detail}")]
    Lp { status: LpStatus, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit failed for candidate {config}: {source}")]
    Candidate {
        config: String,
        #[source]
        source: Box<GdsError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl GdsError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        GdsError::Argument(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        GdsError::Dimension(msg.into())
    }
}
