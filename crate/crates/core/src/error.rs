use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the core routines.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree on a dimension.
    DimensionMismatch { expected: usize, found: usize },
    /// A matrix entry is negative.
    NegativeEntry { row: usize, col: usize, value: f64 },
    /// A matrix entry is NaN or infinite.
    NonFinite { row: usize, col: usize },
    /// Input is not symmetric within the accepted tolerance.
    Asymmetric { row: usize, col: usize, diff: f64 },
    /// A partition matrix or class assignment does not satisfy its constraints.
    InvalidPartition(String),
    /// Some argument is outside its domain.
    InvalidArgument(String),
    /// Enumeration would produce more items than allowed.
    CombinatorialLimit { count: f64, limit: usize },
    /// A size guard was hit (m too large, net too large, table too deep).
    ResourceCap { what: &'static str, requested: f64, cap: f64 },
    /// Two clouds do not share the same k.
    KMismatch { left: usize, right: usize },
    /// A cloud without points.
    EmptyCloud,
    /// A graph without edges.
    EmptyGraph,
    /// A per-k cloud sequence lacks the given k.
    MissingK(usize),
    /// A construction produced a result that breaks a proven bound.
    InvariantViolation(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::NegativeEntry { row, col, value } => {
                write!(f, "negative entry {value} at ({row}, {col})")
            }
            Error::NonFinite { row, col } => write!(f, "non-finite entry at ({row}, {col})"),
            Error::Asymmetric { row, col, diff } => {
                write!(f, "matrix is not symmetric: |a[{row}][{col}] - a[{col}][{row}]| = {diff:e}")
            }
            Error::InvalidPartition(msg) => write!(f, "invalid partition: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::CombinatorialLimit { count, limit } => {
                write!(f, "enumeration needs about {count:.3e} items, limit is {limit}")
            }
            Error::ResourceCap { what, requested, cap } => {
                write!(f, "{what} would be {requested:.3e}, cap is {cap:.3e}")
            }
            Error::KMismatch { left, right } => write!(f, "k mismatch: {left} vs {right}"),
            Error::EmptyCloud => f.write_str("shape cloud is empty"),
            Error::EmptyGraph => f.write_str("graph has no edges"),
            Error::MissingK(k) => write!(f, "no cloud for k = {k}"),
            Error::InvariantViolation(msg) => write!(f, "invariant violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
