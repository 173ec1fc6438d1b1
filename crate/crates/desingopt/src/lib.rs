//! Optimization over bounded-rank matrices through a desingularized lift.
//!
//! The feasible set `{X : rank(X) <= r}` is a non-smooth variety. This crate
//! parameterizes it by the smooth manifold of pairs `(X, P)` where `P` is a
//! rank `n - r` orthogonal projector with `X P = 0`, and stores points as
//! compact factor triplets `(U, Sigma, V)` so that `X = U Sigma V^T` and
//! `P = I - V V^T`. On top of that representation it provides:
//!
//! * a one-parameter family of Riemannian metrics with tangent-space
//!   projections ([`geometry`]),
//! * three retractions, two of them second order ([`retraction`]),
//! * Riemannian gradients and Hessian-vector products lifted from a Euclidean
//!   cost model ([`calculus`]),
//! * matrix-completion and quadratic cost models ([`cost`]),
//! * baseline parameterizations (factored `L R^T` and the fixed-rank embedded
//!   manifold) sharing the same solver contract ([`baselines`]),
//! * gradient descent and a trust-region solver with truncated CG
//!   ([`solver`]),
//! * self-contained property checks used by tests and the CLI verifier
//!   ([`checks`]).

pub mod baselines;
pub mod calculus;
pub mod checks;
pub mod cost;
pub mod error;
pub mod geometry;
mod linalg;
pub mod manifold;
pub mod retraction;
pub mod solver;

pub use calculus::{CostModel, DenseCost, FactoredMatrix, OptimalityReport};
pub use error::{Error, Result};
pub use geometry::SFactor;
pub use manifold::{AmbientVector, ManifoldDims, ManifoldPoint, MetricParam, TangentVector};
pub use retraction::RetractionKind;
pub use solver::{Geometry, SolverConfig, SolverTrace, TerminationReason};
