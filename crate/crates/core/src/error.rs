use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty data")]
    EmptyData,
    #[error("empty input")]
    EmptyInput,
    #[error("too few rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("series too short: need more than {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("design matrix is rank deficient; collinear columns {columns:?} (0 = intercept)")]
    SingularDesign { columns: Vec<usize> },
    #[error("solver hit its iteration cap ({iterations}) without proving optimality")]
    NonConvergence { iterations: usize },
    #[error("level {0} was not fitted")]
    LevelNotFitted(f64),
    #[error("calibration set of {m} scores cannot support level {level}: rank {rank} exceeds {m}")]
    InsufficientCalibration { level: f64, m: usize, rank: usize },
    #[error("invalid counts: {successes} successes out of {n}")]
    InvalidCounts { successes: u64, n: u64 },
    #[error("quantile grid is not sorted")]
    UnsortedGrid,
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(&'static str),
    #[error("series exceeded the overflow guard at t = {at}")]
    OverflowGuard { at: usize },
}

pub type Result<T> = core::result::Result<T, Error>;
