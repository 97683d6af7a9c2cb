//! Crate-wide error type and process exit-code mapping.
//!
//! Every fallible public operation returns [`Result`]. Variants are grouped by
//! failure class so the command-line binary can map them onto stable exit
//! codes: configuration problems (2), data/statistics problems (3), training
//! problems (4), and I/O problems (5). Anything else exits 1.

use thiserror::Error;

/// Convenient alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range, inconsistent, or missing.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input table or record violates the data contract.
    #[error("data error: {0}")]
    Data(String),

    /// A metric is undefined on the given sample (e.g. a subgroup without
    /// positives has no true-positive rate).
    #[error("undefined metric: {metric} for {subject}: {reason}")]
    UndefinedMetric {
        metric: String,
        subject: String,
        reason: String,
    },

    /// A statistical routine could not produce a valid estimate.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Bootstrap resampling kept hitting undefined metrics and gave up.
    #[error(
        "bootstrap infeasible: exceeded {attempts} resampling attempts while \
         {replicates} replicates still produced undefined metrics"
    )]
    BootstrapInfeasible { attempts: usize, replicates: usize },

    /// Model training diverged or produced non-finite values.
    #[error("training error: {0}")]
    Training(String),

    /// A caller violated an API shape/precondition contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable process exit code for this failure class.
    ///
    /// 0 is success; the mapping below never returns 0.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_)
            | Error::UndefinedMetric { .. }
            | Error::Estimation(_)
            | Error::BootstrapInfeasible { .. } => 3,
            Error::Training(_) => 4,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 5,
            Error::Contract(_) => 1,
        }
    }
}
