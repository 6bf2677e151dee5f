use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("duplicate {what} {key} at line {line}")]
    Duplicate { what: &'static str, key: String, line: u64 },

    #[error("negative rainfall {value} on {date} (line {line})")]
    NegativeRainfall { date: String, value: f64, line: u64 },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("no year meets the coverage threshold {min_coverage}")]
    NoValidYears { min_coverage: f64 },

    #[error("series share no common years")]
    EmptyIntersection,

    #[error("overlap window has {found} common years, at least {required} required")]
    OverlapTooShort { found: usize, required: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),

    #[error("return period {0} must exceed 1 year")]
    ReturnPeriodTooShort(f64),

    #[error("level is at or above the upper support bound; return period is infinite")]
    InfiniteReturnPeriod,

    #[error("no finite-posterior starting point found after {attempts} attempts")]
    InitializationFailed { attempts: usize },

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("log-likelihood is -inf for every retained sample")]
    NoFiniteLikelihood,

    #[error("deviance at the posterior mean is infinite (posterior mean lies outside the support)")]
    InfiniteDevianceAtMean,

    #[error("covariate path has {found} values, lifetime needs {expected}")]
    PathLengthMismatch { expected: usize, found: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("scenario {cell:?} failed: {source}")]
    Cell {
        cell: Vec<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("safety factor {sf}: {source}")]
    SafetyFactor {
        sf: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("target {target} not reached within safety factors up to {max_sf}; widen the sweep")]
    TargetUnreachable { target: f64, max_sf: f64 },

    #[error("safety factor {sf} lies below the first cost knot {first_knot}")]
    BelowCostTable { sf: f64, first_knot: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
