use thiserror::Error;

use crate::Sign;

#[derive(Debug, Error)]
pub enum Error {
    /// A holding fell outside `[a_t, b_t]`.
    #[error("holding {value} at period {t} violates bounds [{lower}, {upper}]")]
    Constraint {
        t: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("operation `{op}` is not supported for {kind} scenarios")]
    UnsupportedKind { op: &'static str, kind: &'static str },

    #[error("no closed-form conditional expectation for measure {measure}: {reason}")]
    MissingEvaluator { measure: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tilted measure ({measure}, {sign}) has zero mass")]
    ZeroMeasure { measure: usize, sign: Sign },

    #[error("certification error: {0}")]
    Certification(String),

    #[error("{what} exceeds size limit ({size} > {limit})")]
    SizeLimit {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("linear program is {0}")]
    Lp(&'static str),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
