use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: non-finite {field}")]
    NonFinite { line: usize, field: &'static str },

    #[error("duplicate event id {0}")]
    DuplicateId(u64),

    #[error("invalid time domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("history event at t={event_time} does not precede evaluation time t={t}")]
    HistoryViolation { event_time: f64, t: f64 },

    #[error("conditional intensity is zero at observed event time t={time}")]
    ZeroIntensity { time: f64 },

    #[error("magnitude {m} is not above the truncation magnitude {m0}")]
    BelowThreshold { m: f64, m0: f64 },

    #[error("value {value} lies outside the support of {target}")]
    OutOfSupport { value: f64, target: String },

    #[error("parent at t={time} does not precede the domain end T2={t2}")]
    ParentAfterDomain { time: f64, t2: f64 },

    #[error("integral over bin [{lo}, {hi}] underflows")]
    BinUnderflow { lo: f64, hi: f64 },

    #[error("cascade exceeded {cap} events; parameters are likely supercritical")]
    Supercritical { cap: usize },

    #[error("no event with magnitude >= {0} to anchor the incompleteness model")]
    MissingMainshock(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
