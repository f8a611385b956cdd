//! Behavioral and cycle-approximate simulator of a parametric PCA
//! accelerator fabric.
//!
//! The modeled machine couples `S` output-stationary `T`x`T` systolic MAC
//! arrays (the MM-Engine) with a streaming Jacobi eigensolver unit and a
//! two-tier cache hierarchy whose write-miss policy switches with the
//! compute mode. The library simulates the full PCA pipeline on either a
//! double-precision or a configurable fixed-point datapath, reports cycle
//! and energy estimates from an analytical model, and ships independent
//! oracles that every simulated path is tested against.
//!
//! Entry points:
//! - [`pca::run_pca`] — end-to-end pipeline (standardize, covariance,
//!   eigendecomposition, component selection, projection).
//! - [`scheduler::run_matmul`] — block-streamed engine matmul with cache and
//!   cycle accounting.
//! - [`jacobi::jacobi_eigendecomposition`] — the eigensolver driving the
//!   engine in rotation mode.
//! - [`perf::dse_sweep`] — design-space exploration over (T, S).
//!
//! The `examples/` directory has one runnable program per capability; the
//! `manojavam` binary wraps the same functionality behind a CLI.

pub mod cli;
pub mod cordic;
pub mod datasets;
pub mod fixed;
pub mod io;
pub mod jacobi;
pub mod matrix;
pub mod memory;
pub mod oracle;
pub mod pca;
pub mod perf;
pub mod scalar;
pub mod scheduler;
pub mod systolic;

pub use fixed::{Fixed, QFormat, SatTracker};
pub use matrix::{Matrix, Tile, TiledMatrix};
pub use scalar::Scalar;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("tile address {addr} out of range (backing store holds {len} tiles)")]
    AddrOutOfRange { addr: u64, len: u64 },
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("incomplete accumulation: drained after {got} of {expected} passes")]
    IncompleteAccumulation { got: u32, expected: u32 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("csv error at line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
