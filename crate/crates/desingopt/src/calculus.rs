//! Lifting a Euclidean cost `f` on matrices to the manifold: Riemannian
//! gradient, Hessian-vector products, optimality residuals, and norm bounds.
//!
//! Cost models never see dense `m x n` matrices on the solver path. The
//! current iterate and tangent directions are handed over as sums of low-rank
//! products ([`FactoredMatrix`]), and all contractions with the cost gradient
//! and Hessian go through the product callbacks of [`CostModel`].

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{self, sfactor};
use crate::linalg;
use crate::manifold::{ManifoldPoint, MetricParam, TangentVector};

/// A matrix expressed as a sum of low-rank products `sum_i A_i B_i^T`.
/// Points contribute the single term `(U Sigma, V)`; tangent vectors two
/// terms. The baselines reuse the same carrier for their parameterizations.
#[derive(Clone, Debug)]
pub struct FactoredMatrix {
    m: usize,
    n: usize,
    pub terms: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl FactoredMatrix {
    pub fn zero(m: usize, n: usize) -> Self {
        Self { m, n, terms: Vec::new() }
    }

    /// Single term `A B^T`.
    pub fn from_term(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        assert_eq!(a.ncols(), b.ncols(), "factored term rank mismatch");
        Self { m: a.nrows(), n: b.nrows(), terms: vec![(a, b)] }
    }

    pub fn push_term(&mut self, a: DMatrix<f64>, b: DMatrix<f64>) {
        assert_eq!(a.nrows(), self.m);
        assert_eq!(b.nrows(), self.n);
        assert_eq!(a.ncols(), b.ncols());
        self.terms.push((a, b));
    }

    /// `X = U Sigma V^T` for a manifold point.
    pub fn from_point(pt: &ManifoldPoint) -> Self {
        Self::from_term(pt.u_sigma(), pt.v().clone())
    }

    /// `Xdot = K V^T + U Sigma Vp^T` for a tangent vector at `pt`.
    pub fn from_tangent(pt: &ManifoldPoint, t: &TangentVector) -> Self {
        let mut out = Self::from_term(t.k.clone(), pt.v().clone());
        out.push_term(pt.u_sigma(), t.vp.clone());
        out
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    /// Entry `(i, j)` of the represented matrix.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let mut acc = 0.0;
        for (a, b) in &self.terms {
            for c in 0..a.ncols() {
                acc += a[(i, c)] * b[(j, c)];
            }
        }
        acc
    }

    /// `X * w`.
    pub fn times(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, w.ncols());
        for (a, b) in &self.terms {
            out += a * (b.transpose() * w);
        }
        out
    }

    /// `X^T * w`.
    pub fn t_times(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, w.ncols());
        for (a, b) in &self.terms {
            out += b * (a.transpose() * w);
        }
        out
    }

    /// Materializes the dense matrix. Desk scale only.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.m, self.n);
        for (a, b) in &self.terms {
            out += a * b.transpose();
        }
        out
    }
}

/// Contract a problem implements so solvers can evaluate the cost and
/// contract its derivatives against thin blocks.
///
/// With `X` the current matrix and `Xdot` a direction (both factored):
/// * `grad_right(X, A) = grad f(X) * A` for `A` with `n` rows,
/// * `grad_left(X, B) = grad f(X)^T * B` for `B` with `m` rows,
/// * `hess_right(X, Xdot, A) = hess f(X)[Xdot] * A`,
/// * `hess_left(X, Xdot, B) = hess f(X)[Xdot]^T * B`.
///
/// The two gradient products must be mutually adjoint:
/// `<B, grad_right(X, A)> = <grad_left(X, B), A>` up to round-off.
/// Implementations must be safe to share across threads (read-only problem
/// data).
pub trait CostModel: Send + Sync {
    /// Shape `(m, n)` of the matrices the cost acts on.
    fn dims(&self) -> (usize, usize);

    fn value(&self, x: &FactoredMatrix) -> f64;

    fn grad_right(&self, x: &FactoredMatrix, a: &DMatrix<f64>) -> DMatrix<f64>;

    fn grad_left(&self, x: &FactoredMatrix, b: &DMatrix<f64>) -> DMatrix<f64>;

    fn hess_right(&self, x: &FactoredMatrix, xdot: &FactoredMatrix, a: &DMatrix<f64>)
        -> DMatrix<f64>;

    fn hess_left(&self, x: &FactoredMatrix, xdot: &FactoredMatrix, b: &DMatrix<f64>)
        -> DMatrix<f64>;

    /// Estimate (or exact value) of the operator norm of `hess f(X)`.
    /// Used by the Hessian norm bound diagnostic.
    fn hess_op_norm(&self, x: &FactoredMatrix) -> f64;
}

/// Dense desk-scale access to the cost derivatives, used by verification
/// oracles so they stay independent of the product-based solver path.
pub trait DenseCost: CostModel {
    /// `grad f(X)` as a dense matrix.
    fn grad_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    /// `hess f(X)[Xdot]` as a dense matrix.
    fn hess_apply_dense(&self, x: &DMatrix<f64>, xdot: &DMatrix<f64>) -> DMatrix<f64>;
}

/// Riemannian gradient of the lifted cost at `pt`, with representation
///
/// ```text
/// K  = grad f(X) V,
/// Vp = P (grad f(X)^T U Sigma) S^{-1}.
/// ```
///
/// Costs one `grad_right` and one `grad_left` plus `O(n r^2)`.
pub fn riemannian_gradient(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    metric: MetricParam,
) -> TangentVector {
    let x = FactoredMatrix::from_point(pt);
    let s = sfactor(pt, metric);
    let k = cost.grad_right(&x, pt.v());
    let w = linalg::scale_columns(&cost.grad_left(&x, pt.u()), pt.sigma());
    let vp = s.apply_inv_columns(&pt.apply_projector(&w));
    TangentVector { k, vp }
}

/// Riemannian Hessian-vector product of the lifted cost. With
/// `M = I - U Sigma^2 S^{-1} U^T` (applied as a rank-`r` correction):
///
/// ```text
/// Kbar  = hess f(X)[Xdot] V + M grad f(X) Vp,
/// Vpbar = P (hess f(X)[Xdot]^T U Sigma + grad f(X)^T M K) S^{-1}.
/// ```
pub fn hessian_vec(
    pt: &ManifoldPoint,
    t: &TangentVector,
    cost: &dyn CostModel,
    metric: MetricParam,
) -> TangentVector {
    let x = FactoredMatrix::from_point(pt);
    let xdot = FactoredMatrix::from_tangent(pt, t);
    let s = sfactor(pt, metric);
    let r = pt.dims().r;

    // Column weights sigma_j^2 / S_j of the M correction.
    let mut m_coeff = DVector::zeros(r);
    for j in 0..r {
        let sj = pt.sigma()[j];
        m_coeff[j] = sj * sj / s.diag()[j];
    }
    let apply_m = |w: &DMatrix<f64>| -> DMatrix<f64> {
        let utw = pt.u().transpose() * w;
        w - pt.u() * linalg::scale_rows_vec(&utw, &m_coeff)
    };

    let hr = cost.hess_right(&x, &xdot, pt.v());
    let g_vp = cost.grad_right(&x, &t.vp);
    let k_bar = hr + apply_m(&g_vp);

    let hl = linalg::scale_columns(&cost.hess_left(&x, &xdot, pt.u()), pt.sigma());
    let mk = apply_m(&t.k);
    let w = hl + cost.grad_left(&x, &mk);
    let vp_bar = s.apply_inv_columns(&pt.apply_projector(&w));
    TangentVector { k: k_bar, vp: vp_bar }
}

/// First-order criticality residuals at a point. The point is critical
/// exactly when both `grad f(X) V = 0` and `grad f(X)^T U Sigma = 0`,
/// i.e. when both residuals vanish; `grad_norm` is zero iff they are.
#[derive(Clone, Debug)]
pub struct OptimalityReport {
    /// Metric norm of the Riemannian gradient.
    pub grad_norm: f64,
    /// `|grad f(X) V|_F`.
    pub kv_residual: f64,
    /// `|grad f(X)^T U Sigma|_F`.
    pub usigma_residual: f64,
    /// Smallest Hessian eigenvalue estimate (Lanczos), when requested.
    pub hess_min_eig_estimate: Option<f64>,
}

/// Computes the first-order optimality residuals.
pub fn optimality_report(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    metric: MetricParam,
) -> OptimalityReport {
    let x = FactoredMatrix::from_point(pt);
    let s = sfactor(pt, metric);
    let k = cost.grad_right(&x, pt.v());
    let w = linalg::scale_columns(&cost.grad_left(&x, pt.u()), pt.sigma());
    let kv_residual = k.norm();
    let usigma_residual = w.norm();
    let vp = s.apply_inv_columns(&pt.apply_projector(&w));
    let grad = TangentVector { k, vp };
    OptimalityReport {
        grad_norm: geometry::norm(pt, &grad, metric),
        kv_residual,
        usigma_residual,
        hess_min_eig_estimate: None,
    }
}

/// [`optimality_report`] plus a Lanczos estimate of the smallest Hessian
/// eigenvalue. Desk scale: iterations are capped at `2 * dim(M)`.
/// Reported, never enforced.
pub fn optimality_report_with_min_eig(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    metric: MetricParam,
    max_iters: usize,
    seed: u64,
) -> OptimalityReport {
    let mut report = optimality_report(pt, cost, metric);
    report.hess_min_eig_estimate =
        Some(hessian_min_eig_estimate(pt, cost, metric, max_iters, seed));
    report
}

/// Lanczos estimate of the smallest eigenvalue of the Riemannian Hessian at
/// `pt`, run in the metric inner product with full reorthogonalization.
pub fn hessian_min_eig_estimate(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    metric: MetricParam,
    max_iters: usize,
    seed: u64,
) -> f64 {
    let dim = pt.dims().manifold_dim();
    let iters = max_iters.min(2 * dim).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<TangentVector> = Vec::with_capacity(iters);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let q0 = crate::manifold::sample_tangent(pt, metric, &mut rng);
    basis.push(q0);

    for j in 0..iters {
        let qj = basis[j].clone();
        let mut w = hessian_vec(pt, &qj, cost, metric);
        let alpha = geometry::inner(pt, &w, &qj, metric);
        alphas.push(alpha);
        // Full reorthogonalization against the stored basis.
        for q in &basis {
            let coeff = geometry::inner(pt, &w, q, metric);
            w = w.lincomb(1.0, -coeff, q);
        }
        let beta = geometry::norm(pt, &w, metric);
        if beta <= 1e-13 || j + 1 == iters {
            break;
        }
        betas.push(beta);
        basis.push(w.scaled(1.0 / beta));
    }

    // Smallest eigenvalue of the Lanczos tridiagonal.
    let k = alphas.len();
    let mut tri = DMatrix::zeros(k, k);
    for i in 0..k {
        tri[(i, i)] = alphas[i];
        if i + 1 < k {
            tri[(i, i + 1)] = betas[i];
            tri[(i + 1, i)] = betas[i];
        }
    }
    let (vals, _) = linalg::sym_eigen_desc(&tri);
    vals[k - 1]
}

/// Parameters of the power iteration used for spectral-norm estimates.
#[derive(Clone, Copy, Debug)]
pub struct PowerIterParams {
    pub iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerIterParams {
    fn default() -> Self {
        Self { iters: 50, tol: 1e-6, seed: 0 }
    }
}

/// Upper bound on the operator norm of the Riemannian Hessian at `pt`:
///
/// ```text
/// |hess g|_op <= |hess f(X)|_op + (2 alpha + sigma_r(X)^2)^{-1/2} |grad f(X) P|_2
/// ```
///
/// The spectral norm `|grad f(X) P|_2` is estimated by power iteration on
/// `P grad f^T grad f P` through the cost products; it is an estimate (from
/// below), flagged as such. Diagnostic only.
pub fn hessian_norm_bound(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    metric: MetricParam,
    power: PowerIterParams,
) -> f64 {
    let x = FactoredMatrix::from_point(pt);
    let sr = pt.sigma_min();
    let coeff = 1.0 / (2.0 * metric.alpha() + sr * sr).sqrt();
    cost.hess_op_norm(&x) + coeff * grad_projector_spectral_norm(pt, cost, power)
}

/// Power-iteration estimate of `|grad f(X) P|_2` with `P = I - V V^T`,
/// computed through `grad_right`/`grad_left` products on `n x 1` blocks.
pub fn grad_projector_spectral_norm(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    power: PowerIterParams,
) -> f64 {
    let x = FactoredMatrix::from_point(pt);
    let n = pt.dims().n;
    let mut rng = ChaCha8Rng::seed_from_u64(power.seed);
    let mut v = linalg::gaussian_matrix(&mut rng, n, 1);
    let nv = v.norm();
    if nv == 0.0 {
        return 0.0;
    }
    v /= nv;
    let mut estimate = 0.0;
    for _ in 0..power.iters.max(1) {
        let pv = pt.apply_projector(&v);
        let y = cost.grad_right(&x, &pv);
        let w = cost.grad_left(&x, &y);
        let pw = pt.apply_projector(&w);
        let rayleigh = v.dot(&pw).max(0.0);
        let new_estimate = rayleigh.sqrt();
        let advance = pw.norm();
        if advance <= f64::MIN_POSITIVE {
            return 0.0;
        }
        v = pw / advance;
        if (new_estimate - estimate).abs() <= power.tol * new_estimate.max(1.0) {
            return new_estimate;
        }
        estimate = new_estimate;
    }
    estimate
}
