//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library. Contract violations that can arrive from
/// user input (configs, CSV files, frequency grids) are reported through
/// these variants; internal programming errors panic via `assert!`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("invalid frequency grid: {0}")]
    InvalidFrequencies(String),

    #[error("point outside domain: {0}")]
    OutsideDomain(String),

    #[error("CFL condition violated: dt = {dt}, limit = {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("invalid time horizon: {0}")]
    InvalidHorizon(String),

    #[error("noise target unreachable: {0}")]
    NoiseTargetUnreachable(String),

    #[error("evaluation point beyond data grid: k = {k}, grid ends at {k_max}")]
    BeyondDataGrid { k: f64, k_max: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
