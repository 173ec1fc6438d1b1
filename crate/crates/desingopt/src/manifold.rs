//! Points and tangent vectors of the desingularized bounded-rank manifold.
//!
//! A point of the manifold is a pair `(X, P)` with `X` an `m x n` matrix,
//! `P` a rank `n - r` orthogonal projector, and `X P = 0`. It is stored as a
//! triplet `(U, Sigma, V)` with `U in St(m, r)`, `V in St(n, r)` and `Sigma`
//! a non-negative diagonal, so that `X = U Sigma V^T` and `P = I - V V^T`.
//! The constraint `X P = 0` then holds identically.
//!
//! A tangent vector `(Xdot, Pdot)` at `(X, P)` is stored as a pair `(K, Vp)`
//! with `V^T Vp = 0`, encoding
//!
//! ```text
//! Xdot = K V^T + U Sigma Vp^T,      Pdot = -Vp V^T - V Vp^T.
//! ```
//!
//! Representations are not unique (for example any `U` works when `X = 0`);
//! equality of points is judged through the matrices they represent, never
//! through their factors.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::linalg;

/// Default tolerance for orthonormality and on-manifold validation.
pub const DEFAULT_ORTH_TOL: f64 = 1e-10;

/// Default interval for the singular values of randomly sampled points.
/// Initializations close to zero work well for the completion experiments.
pub const DEFAULT_SV_INTERVAL: (f64, f64) = (0.0, 1e-3);

static TANGENT_DRIFT_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of times tangent construction had to clean up a `Vp` whose drift
/// `|V^T Vp|_F` exceeded the default tolerance. Diagnostic only.
pub fn tangent_drift_events() -> u64 {
    TANGENT_DRIFT_EVENTS.load(Ordering::Relaxed)
}

/// Resets the tangent drift counter.
pub fn reset_tangent_drift_events() {
    TANGENT_DRIFT_EVENTS.store(0, Ordering::Relaxed);
}

/// Problem sizes: `m x n` matrices of rank at most `r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifoldDims {
    pub m: usize,
    pub n: usize,
    pub r: usize,
}

impl ManifoldDims {
    pub fn new(m: usize, n: usize, r: usize) -> Result<Self> {
        if m == 0 || n == 0 || r == 0 || r >= m.min(n) {
            return Err(Error::InvalidDims { m, n, r });
        }
        Ok(Self { m, n, r })
    }

    /// Dimension of the manifold, `(m + n - r) r`.
    pub fn manifold_dim(&self) -> usize {
        (self.m + self.n - self.r) * self.r
    }
}

/// Metric parameter `alpha > 0` weighting the projector block of the ambient
/// inner product. `alpha = 0` would degenerate the metric and is rejected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricParam {
    alpha: f64,
}

impl MetricParam {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidMetric { alpha });
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for MetricParam {
    fn default() -> Self {
        Self { alpha: 0.5 }
    }
}

/// A manifold point stored as `(U, Sigma, V)`.
///
/// Invariants maintained by every constructor:
/// * `U` and `V` have orthonormal columns within the construction tolerance,
/// * `Sigma` is non-negative and sorted in descending order,
/// * the represented pair satisfies `X P = 0` identically.
///
/// Entries of `Sigma` may be zero: rank-deficient points are ordinary
/// citizens here, and no operation divides by a singular value.
#[derive(Clone, Debug)]
pub struct ManifoldPoint {
    dims: ManifoldDims,
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
}

impl ManifoldPoint {
    /// Builds a point from factors, validating orthonormality within the
    /// default tolerance and re-sorting `Sigma` in descending order (with the
    /// matching column permutation of `U` and `V`).
    pub fn from_factors(u: DMatrix<f64>, sigma: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        Self::from_factors_with_tol(u, sigma, v, DEFAULT_ORTH_TOL)
    }

    /// Same as [`ManifoldPoint::from_factors`] with an explicit tolerance.
    pub fn from_factors_with_tol(
        u: DMatrix<f64>,
        mut sigma: DVector<f64>,
        v: DMatrix<f64>,
        orth_tol: f64,
    ) -> Result<Self> {
        let (m, ru) = u.shape();
        let (n, rv) = v.shape();
        if ru != rv || sigma.len() != ru {
            return Err(Error::ShapeMismatch {
                context: "from_factors",
                expected_rows: n,
                expected_cols: ru,
                rows: n,
                cols: rv,
            });
        }
        let dims = ManifoldDims::new(m, n, ru)?;

        let ru_res = linalg::orth_residual(&u);
        if ru_res > orth_tol {
            return Err(Error::OrthonormalityViolation { residual: ru_res, tol: orth_tol });
        }
        let rv_res = linalg::orth_residual(&v);
        if rv_res > orth_tol {
            return Err(Error::OrthonormalityViolation { residual: rv_res, tol: orth_tol });
        }
        for i in 0..sigma.len() {
            if sigma[i] < -orth_tol {
                return Err(Error::NegativeSingularValue { index: i, value: sigma[i] });
            }
            if sigma[i] < 0.0 {
                sigma[i] = 0.0;
            }
        }
        Ok(Self::from_sorted_factors(dims, u, sigma, v))
    }

    /// Internal constructor for factors that are orthonormal by construction
    /// (outputs of QR/SVD). Sorts `Sigma` if needed, skips validation.
    pub(crate) fn from_factors_unchecked(
        u: DMatrix<f64>,
        sigma: DVector<f64>,
        v: DMatrix<f64>,
    ) -> Self {
        let dims = ManifoldDims {
            m: u.nrows(),
            n: v.nrows(),
            r: u.ncols(),
        };
        debug_assert!(linalg::orth_residual(&u) <= 1e-8);
        debug_assert!(linalg::orth_residual(&v) <= 1e-8);
        Self::from_sorted_factors(dims, u, sigma, v)
    }

    fn from_sorted_factors(
        dims: ManifoldDims,
        u: DMatrix<f64>,
        sigma: DVector<f64>,
        v: DMatrix<f64>,
    ) -> Self {
        let r = dims.r;
        let sorted = (1..r).all(|i| sigma[i - 1] >= sigma[i]);
        if sorted {
            return Self { dims, u, sigma, v };
        }
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).expect("finite singular values"));
        let mut us = DMatrix::zeros(dims.m, r);
        let mut vs = DMatrix::zeros(dims.n, r);
        let mut ss = DVector::zeros(r);
        for (dst, &src) in order.iter().enumerate() {
            us.set_column(dst, &u.column(src));
            vs.set_column(dst, &v.column(src));
            ss[dst] = sigma[src];
        }
        Self { dims, u: us, sigma: ss, v: vs }
    }

    /// Builds a point from dense `(X, P)`. Desk scale only: validates that
    /// `P` is a symmetric projector of rank `n - r` and that `|X P|_F` is at
    /// most `tol * |X|_F`, then factors `X` restricted to the range of
    /// `I - P`.
    pub fn from_dense(x: &DMatrix<f64>, p: &DMatrix<f64>, r: usize) -> Result<Self> {
        Self::from_dense_with_tol(x, p, r, DEFAULT_ORTH_TOL)
    }

    /// Same as [`ManifoldPoint::from_dense`] with an explicit tolerance.
    pub fn from_dense_with_tol(
        x: &DMatrix<f64>,
        p: &DMatrix<f64>,
        r: usize,
        tol: f64,
    ) -> Result<Self> {
        let (m, n) = x.shape();
        let dims = ManifoldDims::new(m, n, r)?;
        if p.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                context: "from_dense projector",
                expected_rows: n,
                expected_cols: n,
                rows: p.nrows(),
                cols: p.ncols(),
            });
        }
        let sym_res = (p - p.transpose()).norm();
        if sym_res > tol * (1.0 + p.norm()) {
            return Err(Error::NotSymmetric { residual: sym_res, tol });
        }
        let idem_res = (p * p - p).norm();
        if idem_res > tol * (1.0 + p.norm()) {
            return Err(Error::NotOnManifold { residual: idem_res, tol });
        }
        // Rank of P from its eigenvalues (each is close to 0 or 1).
        let (evals, evecs) = linalg::sym_eigen_desc(&(DMatrix::identity(n, n) - p));
        let rank_ip = evals.iter().filter(|&&l| l > 0.5).count();
        if rank_ip != r {
            return Err(Error::RankMismatch { expected: n - r, found: n - rank_ip });
        }
        let xp_res = (x * p).norm();
        if xp_res > tol * x.norm() {
            return Err(Error::NotOnManifold { residual: xp_res, tol: tol * x.norm() });
        }
        // Basis W of range(I - P); factor X W and push the rotation into V.
        let w = evecs.columns(0, r).into_owned();
        let (u, sigma, h) = linalg::thin_svd(&(x * &w));
        let v = w * h;
        Ok(Self::from_sorted_factors(dims, u, sigma, v))
    }

    /// Expands the representation into dense `(X, P)`. Desk scale only.
    pub fn to_dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let x = self.u_sigma() * self.v.transpose();
        let p = DMatrix::identity(self.dims.n, self.dims.n) - &self.v * self.v.transpose();
        (x, p)
    }

    pub fn dims(&self) -> ManifoldDims {
        self.dims
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// Smallest stored singular value, `sigma_r(X)`.
    pub fn sigma_min(&self) -> f64 {
        self.sigma[self.dims.r - 1]
    }

    /// The product `U Sigma`.
    pub fn u_sigma(&self) -> DMatrix<f64> {
        linalg::scale_columns(&self.u, &self.sigma)
    }

    /// Applies `P = I - V V^T` to the columns of `w` without forming `P`.
    pub fn apply_projector(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        w - &self.v * (self.v.transpose() * w)
    }
}

/// Distance between the matrices represented by two points, computed from the
/// factors: returns `(|X1 - X2|_F, |P1 - P2|_F)`.
pub fn point_distance(a: &ManifoldPoint, b: &ManifoldPoint) -> (f64, f64) {
    let ua = a.u_sigma();
    let ub = b.u_sigma();
    let cross = (ua.transpose() * &ub).dot(&(a.v().transpose() * b.v()));
    let x2 = (ua.norm_squared() + ub.norm_squared() - 2.0 * cross).max(0.0);
    let vv = (a.v().transpose() * b.v()).norm_squared();
    let p2 = (2.0 * a.dims().r as f64 - 2.0 * vv).max(0.0);
    (x2.sqrt(), p2.sqrt())
}

/// A tangent vector stored as `(K, Vp)` with `V^T Vp = 0` relative to the
/// base point it was built at. Tangent vectors are always paired with their
/// base point in operation signatures.
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub k: DMatrix<f64>,
    pub vp: DMatrix<f64>,
}

impl TangentVector {
    /// Zero tangent vector at `pt`.
    pub fn zero(pt: &ManifoldPoint) -> Self {
        Self {
            k: DMatrix::zeros(pt.dims().m, pt.dims().r),
            vp: DMatrix::zeros(pt.dims().n, pt.dims().r),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { k: &self.k * s, vp: &self.vp * s }
    }

    /// Linear combination `a * self + b * other`.
    pub fn lincomb(&self, a: f64, b: f64, other: &Self) -> Self {
        Self {
            k: &self.k * a + &other.k * b,
            vp: &self.vp * a + &other.vp * b,
        }
    }
}

/// Builds a tangent vector from raw parts, enforcing `V^T Vp = 0` by
/// projecting `Vp <- (I - V V^T) Vp`. The projection is idempotent; inputs
/// already satisfying the constraint pass through unchanged. Drift beyond the
/// default tolerance is counted (see [`tangent_drift_events`]).
pub fn tangent_from_ambient_parts(
    pt: &ManifoldPoint,
    k: DMatrix<f64>,
    vp: DMatrix<f64>,
) -> TangentVector {
    let overlap = pt.v().transpose() * &vp;
    let drift = overlap.norm();
    if drift > DEFAULT_ORTH_TOL * (1.0 + vp.norm()) {
        TANGENT_DRIFT_EVENTS.fetch_add(1, Ordering::Relaxed);
    }
    let vp = vp - pt.v() * overlap;
    TangentVector { k, vp }
}

/// A general element `(Y, Z)` of the embedding space, with `Z` symmetric.
/// Dense; used at desk scale by tests and verification oracles.
#[derive(Clone, Debug)]
pub struct AmbientVector {
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl AmbientVector {
    /// Validates that `z` is symmetric within the default tolerance.
    pub fn new(y: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let res = (&z - z.transpose()).norm();
        let tol = DEFAULT_ORTH_TOL * (1.0 + z.norm());
        if res > tol {
            return Err(Error::NotSymmetric { residual: res, tol });
        }
        Ok(Self { y, z })
    }
}

/// Expands a tangent vector into its ambient image
/// `(Xdot, Pdot) = (K V^T + U Sigma Vp^T, -Vp V^T - V Vp^T)`.
pub fn tangent_to_ambient(pt: &ManifoldPoint, t: &TangentVector) -> AmbientVector {
    let y = &t.k * pt.v().transpose() + pt.u_sigma() * t.vp.transpose();
    let zh = -&t.vp * pt.v().transpose();
    let z = &zh + zh.transpose();
    AmbientVector { y, z }
}

/// Samples a point with `U, V` uniform on their Stiefel manifolds and
/// singular values uniform in `sv_interval`, using the provided generator.
pub fn sample_point<R: Rng + ?Sized>(
    dims: ManifoldDims,
    sv_interval: (f64, f64),
    rng: &mut R,
) -> ManifoldPoint {
    let u = linalg::random_stiefel(rng, dims.m, dims.r);
    let v = linalg::random_stiefel(rng, dims.n, dims.r);
    let (lo, hi) = sv_interval;
    let sigma = DVector::from_fn(dims.r, |_, _| lo + (hi - lo) * rng.random::<f64>());
    ManifoldPoint::from_sorted_factors(dims, u, sigma, v)
}

/// Seeded wrapper around [`sample_point`] with the default singular-value
/// interval.
pub fn random_point(dims: ManifoldDims, seed: u64) -> ManifoldPoint {
    random_point_in(dims, DEFAULT_SV_INTERVAL, seed)
}

/// Seeded point sample with singular values uniform in `sv_interval`.
pub fn random_point_in(dims: ManifoldDims, sv_interval: (f64, f64), seed: u64) -> ManifoldPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_point(dims, sv_interval, &mut rng)
}

/// Samples a Gaussian tangent vector at `pt` (cleaned so `V^T Vp = 0`),
/// normalized to unit norm in the `metric` inner product.
pub fn sample_tangent<R: Rng + ?Sized>(
    pt: &ManifoldPoint,
    metric: MetricParam,
    rng: &mut R,
) -> TangentVector {
    let dims = pt.dims();
    let k = linalg::gaussian_matrix(rng, dims.m, dims.r);
    let vp = linalg::gaussian_matrix(rng, dims.n, dims.r);
    let t = tangent_from_ambient_parts(pt, k, vp);
    let norm = geometry::norm(pt, &t, metric);
    if norm > 0.0 {
        t.scaled(1.0 / norm)
    } else {
        t
    }
}

/// Seeded wrapper around [`sample_tangent`].
pub fn random_tangent(pt: &ManifoldPoint, metric: MetricParam, seed: u64) -> TangentVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_tangent(pt, metric, &mut rng)
}
