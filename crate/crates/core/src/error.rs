//! Crate-wide error type.
//!
//! Variants are grouped by how callers are expected to react: configuration
//! and argument problems, data problems (parsing, domain violations,
//! duplicates), and numerical failures (stalled samplers, non-convergence).
//! The CLI maps these groups onto distinct exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument or configuration value, detected before any work.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Rating domain is malformed (l >= u, non-finite bounds, bad step).
    #[error("invalid rating domain: {0}")]
    Domain(String),

    /// Privacy parameters are unusable (epsilon <= 0, sensitivity out of range).
    #[error("invalid privacy parameters: {0}")]
    Privacy(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed record in an input file; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A rating value outside the declared domain.
    #[error("rating {value} outside domain [{lo}, {hi}] at line {line}")]
    RatingOutOfDomain { value: f64, lo: f64, hi: f64, line: usize },

    /// The same (user, item) cell appears twice in one dataset.
    #[error("duplicate entry for user {user}, item {item}")]
    DuplicateEntry { user: usize, item: usize },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    /// Index into a matrix or model out of bounds.
    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    /// Rejection sampler exceeded its attempt cap; indicates a broken scale.
    #[error("rejection sampler stalled after {attempts} attempts")]
    SamplerStalled { attempts: u64 },

    /// Iterative routine failed to reach its tolerance.
    #[error("failed to converge: {0}")]
    NonConvergence(String),

    /// An audit or statistical routine was given too little data to be valid.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// Numerical failure that is not a convergence problem (NaN, singular
    /// system outside the tolerated cases).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Model container bytes do not describe a valid model.
    #[error("malformed model container: {0}")]
    ModelFormat(String),
}

impl Error {
    /// Exit-code group used by the CLI: 1 config, 2 data, 3 numerical.
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Privacy(_) => 1,
            Error::Io(_)
            | Error::Parse { .. }
            | Error::RatingOutOfDomain { .. }
            | Error::DuplicateEntry { .. }
            | Error::EmptyDataset(_)
            | Error::ModelFormat(_) => 2,
            Error::IndexOutOfBounds(_)
            | Error::SamplerStalled { .. }
            | Error::NonConvergence(_)
            | Error::InsufficientSamples(_)
            | Error::Numerical(_) => 3,
        }
    }
}
