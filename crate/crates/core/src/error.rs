use std::path::PathBuf;

use thiserror::Error;

use crate::model::Standard;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("duplicate laboratory label `{0}`")]
    DuplicateLabel(String),
    #[error("laboratory `{0}` reports no measurement")]
    NoMeasurement(String),
    #[error("laboratory `{label}`: value and uncertainty for standard {standard} must be given together")]
    UnpairedValue { label: String, standard: Standard },
    #[error("laboratory `{label}`: uncertainty for standard {standard} must be positive and finite, got {value}")]
    NonPositiveUncertainty {
        label: String,
        standard: Standard,
        value: f64,
    },
    #[error("laboratory `{label}`: non-finite value for standard {standard}")]
    NonFiniteValue { label: String, standard: Standard },
    #[error(
        "laboratory `{0}`: covariance given but the laboratory did not measure both standards"
    )]
    CovarianceWithoutPair(String),
    #[error(
        "laboratory `{label}`: |cov_ab| = {cov} must be smaller than u_a*u_b = {bound} (|r| < 1)"
    )]
    CovarianceOutOfRange { label: String, cov: f64, bound: f64 },
    #[error("no laboratory measured standard {0}")]
    EmptyGroup(Standard),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("unknown laboratory `{0}`")]
    UnknownLabel(String),
    #[error("laboratory `{label}` did not measure standard {standard}")]
    StandardNotMeasured { label: String, standard: Standard },
    #[error("no uncertainty up to {cap} for `{label}` passes the conformity test; the misfit is not attributable to this laboratory alone")]
    NoPassingUncertainty { label: String, cap: f64 },
    #[error("invalid option: {0}")]
    InvalidOption(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("degenerate sample for `{label}` after {attempts} attempts")]
    DegenerateSample { label: String, attempts: u32 },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
