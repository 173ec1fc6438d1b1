//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: need 1 <= r < min(m, n), got m={m}, n={n}, r={r}")]
    InvalidDims { m: usize, n: usize, r: usize },

    #[error("invalid metric parameter alpha={alpha}: must be positive and finite")]
    InvalidMetric { alpha: f64 },

    #[error("invalid solver configuration: {0}")]
    InvalidSolverConfig(&'static str),

    #[error("{context}: expected a {expected_rows}x{expected_cols} matrix, got {rows}x{cols}")]
    ShapeMismatch {
        context: &'static str,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("columns not orthonormal: |Q^T Q - I|_F = {residual:.3e} exceeds {tol:.3e}")]
    OrthonormalityViolation { residual: f64, tol: f64 },

    #[error("singular value {value:.3e} at index {index} is negative beyond tolerance")]
    NegativeSingularValue { index: usize, value: f64 },

    #[error("matrix Z is not symmetric: |Z - Z^T|_F = {residual:.3e} exceeds {tol:.3e}")]
    NotSymmetric { residual: f64, tol: f64 },

    #[error("(X, P) is not on the manifold: |X P|_F = {residual:.3e} exceeds {tol:.3e}")]
    NotOnManifold { residual: f64, tol: f64 },

    #[error("projector rank {found} does not match n - r = {expected}")]
    RankMismatch { expected: usize, found: usize },

    #[error("requested {nnz} mask entries but the matrix has only {cells} cells")]
    OversampleTooLarge { nnz: usize, cells: usize },

    #[error("observed values ({observed}) do not match mask size ({nnz})")]
    ObservationMismatch { observed: usize, nnz: usize },

    #[error("mask index ({i}, {j}) out of range for a {m}x{n} matrix")]
    MaskIndexOutOfRange { i: u64, j: u64, m: usize, n: usize },

    #[error("rank dropped: sigma_r / sigma_1 = {ratio:.3e} fell below the numerical floor")]
    RankDropped { ratio: f64 },

    #[error("unrecognized problem container format '{0}'")]
    UnknownFormat(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
