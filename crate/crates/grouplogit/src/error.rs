//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by design construction, likelihood evaluation, prior
/// evaluation, geometry searches, sampling, and file ingestion.
#[derive(Debug, Error)]
pub enum Error {
    /// Vector/matrix dimensions do not agree with the design or partition.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A group partition failed validation (overlap, gap, empty group).
    #[error("invalid group partition: {0}")]
    InvalidPartition(String),

    /// An argument is outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A non-finite value (NaN or infinity) was passed where a finite one
    /// is required.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// The exact posterior oracle refuses instances beyond its enumeration
    /// and quadrature caps; it never silently approximates.
    #[error("oracle capacity exceeded: {0}")]
    OracleCapExceeded(String),

    /// A quantity is degenerate (zero compatibility estimate, empty chain).
    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    /// Malformed content in an otherwise readable input file.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
