//! Comparison geometries: the factored `L R^T` parameterization (a plain
//! Euclidean product space) and the fixed-rank embedded manifold. Both expose
//! gradient / Hessian-vector products through the same [`CostModel`] contract
//! the desingularized geometry uses, so all three plug into the same solvers.

use nalgebra::{DMatrix, DVector};

use crate::calculus::{CostModel, FactoredMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::manifold::ManifoldPoint;

/// Numerical floor for the fixed-rank manifold: an iterate whose smallest
/// singular value falls below this fraction of the largest is treated as
/// having left the manifold's interior.
pub const RANK_DROP_REL_TOL: f64 = 1e-14;

// ---------------------------------------------------------------------------
// LR parameterization
// ---------------------------------------------------------------------------

/// An unconstrained pair `(L, R)` representing `X = L R^T`.
#[derive(Clone, Debug)]
pub struct LrPoint {
    pub l: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LrPoint {
    /// Balanced factors for the matrix represented by a manifold point:
    /// `L = U Sigma^{1/2}`, `R = V Sigma^{1/2}`, so `L R^T = U Sigma V^T`.
    pub fn balanced_from_point(pt: &ManifoldPoint) -> Self {
        let sqrt_sigma = DVector::from_iterator(
            pt.sigma().len(),
            pt.sigma().iter().map(|&s| s.max(0.0).sqrt()),
        );
        LrPoint {
            l: linalg::scale_columns(pt.u(), &sqrt_sigma),
            r: linalg::scale_columns(pt.v(), &sqrt_sigma),
        }
    }

    pub fn factored(&self) -> FactoredMatrix {
        FactoredMatrix::from_term(self.l.clone(), self.r.clone())
    }
}

/// A direction `(Ldot, Rdot)` in the product space.
#[derive(Clone, Debug)]
pub struct LrTangent {
    pub dl: DMatrix<f64>,
    pub dr: DMatrix<f64>,
}

impl LrTangent {
    pub fn zero(p: &LrPoint) -> Self {
        Self {
            dl: DMatrix::zeros(p.l.nrows(), p.l.ncols()),
            dr: DMatrix::zeros(p.r.nrows(), p.r.ncols()),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { dl: &self.dl * s, dr: &self.dr * s }
    }

    pub fn lincomb(&self, a: f64, b: f64, other: &Self) -> Self {
        Self { dl: &self.dl * a + &other.dl * b, dr: &self.dr * a + &other.dr * b }
    }
}

/// Direction of the composite `Xdot = Ldot R^T + L Rdot^T`.
fn lr_direction(p: &LrPoint, t: &LrTangent) -> FactoredMatrix {
    let mut xdot = FactoredMatrix::from_term(t.dl.clone(), p.r.clone());
    xdot.push_term(p.l.clone(), t.dr.clone());
    xdot
}

pub fn lr_value(cost: &dyn CostModel, p: &LrPoint) -> f64 {
    cost.value(&p.factored())
}

/// Euclidean gradient of `g(L, R) = f(L R^T)`:
/// `grad_L = grad f(X) R`, `grad_R = grad f(X)^T L`.
pub fn lr_gradient(cost: &dyn CostModel, p: &LrPoint) -> LrTangent {
    let x = p.factored();
    LrTangent { dl: cost.grad_right(&x, &p.r), dr: cost.grad_left(&x, &p.l) }
}

/// Euclidean Hessian-vector product of `g(L, R)`, including the cross terms
/// `grad f(X) Rdot` and `grad f(X)^T Ldot`:
///
/// ```text
/// H_L = hess f(X)[Xdot] R + grad f(X) Rdot,
/// H_R = hess f(X)[Xdot]^T L + grad f(X)^T Ldot.
/// ```
pub fn lr_hessian_vec(cost: &dyn CostModel, p: &LrPoint, t: &LrTangent) -> LrTangent {
    let x = p.factored();
    let xdot = lr_direction(p, t);
    LrTangent {
        dl: cost.hess_right(&x, &xdot, &p.r) + cost.grad_right(&x, &t.dr),
        dr: cost.hess_left(&x, &xdot, &p.l) + cost.grad_left(&x, &t.dl),
    }
}

pub fn lr_inner(a: &LrTangent, b: &LrTangent) -> f64 {
    a.dl.dot(&b.dl) + a.dr.dot(&b.dr)
}

// ---------------------------------------------------------------------------
// Fixed-rank embedded manifold
// ---------------------------------------------------------------------------

/// A rank-`r` matrix stored as `(U, Sigma, V)` with strictly positive
/// singular values. Unlike [`ManifoldPoint`], rank deficiency is not
/// representable here.
#[derive(Clone, Debug)]
pub struct FixedRankPoint {
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v: DMatrix<f64>,
}

impl FixedRankPoint {
    pub fn from_factors(u: DMatrix<f64>, sigma: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        let r = sigma.len();
        if r == 0 || sigma[r - 1] <= 0.0 {
            return Err(Error::RankDropped {
                ratio: if r == 0 || sigma[0] <= 0.0 { 0.0 } else { sigma[r - 1] / sigma[0] },
            });
        }
        Ok(Self { u, sigma, v })
    }

    /// Reinterprets a desingularization point of full numerical rank.
    pub fn from_manifold_point(pt: &ManifoldPoint) -> Result<Self> {
        Self::from_factors(pt.u().clone(), pt.sigma().clone(), pt.v().clone())
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

    pub fn factored(&self) -> FactoredMatrix {
        FactoredMatrix::from_term(linalg::scale_columns(&self.u, &self.sigma), self.v.clone())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        linalg::scale_columns(&self.u, &self.sigma) * self.v.transpose()
    }
}

/// Tangent vector `Xdot = U M V^T + Up V^T + U Vp^T` with `U^T Up = 0` and
/// `V^T Vp = 0`, under the Euclidean metric.
#[derive(Clone, Debug)]
pub struct FixedRankTangent {
    pub m: DMatrix<f64>,
    pub up: DMatrix<f64>,
    pub vp: DMatrix<f64>,
}

impl FixedRankTangent {
    pub fn zero(p: &FixedRankPoint) -> Self {
        let r = p.sigma.len();
        Self {
            m: DMatrix::zeros(r, r),
            up: DMatrix::zeros(p.u.nrows(), r),
            vp: DMatrix::zeros(p.v.nrows(), r),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { m: &self.m * s, up: &self.up * s, vp: &self.vp * s }
    }

    pub fn lincomb(&self, a: f64, b: f64, other: &Self) -> Self {
        Self {
            m: &self.m * a + &other.m * b,
            up: &self.up * a + &other.up * b,
            vp: &self.vp * a + &other.vp * b,
        }
    }

    /// The ambient direction as a factored matrix.
    pub fn direction(&self, p: &FixedRankPoint) -> FactoredMatrix {
        let mut xdot = FactoredMatrix::from_term(&p.u * &self.m + &self.up, p.v.clone());
        xdot.push_term(p.u.clone(), self.vp.clone());
        xdot
    }
}

pub fn fixedrank_inner(a: &FixedRankTangent, b: &FixedRankTangent) -> f64 {
    a.m.dot(&b.m) + a.up.dot(&b.up) + a.vp.dot(&b.vp)
}

/// Orthogonal projection of a dense ambient matrix onto the tangent space:
/// `M = U^T Y V`, `Up = (I - U U^T) Y V`, `Vp = (I - V V^T) Y^T U`.
/// Dense; desk scale only.
pub fn fixedrank_project_dense(p: &FixedRankPoint, y: &DMatrix<f64>) -> FixedRankTangent {
    let yv = y * &p.v;
    let ytu = y.transpose() * &p.u;
    let m = p.u.transpose() * &yv;
    let up = &yv - &p.u * &m;
    let vp = &ytu - &p.v * (p.v.transpose() * &ytu);
    FixedRankTangent { m, up, vp }
}

/// Riemannian gradient through the cost products.
pub fn fixedrank_gradient(cost: &dyn CostModel, p: &FixedRankPoint) -> FixedRankTangent {
    let x = p.factored();
    let gv = cost.grad_right(&x, &p.v);
    let gu = cost.grad_left(&x, &p.u);
    let m = p.u.transpose() * &gv;
    let up = &gv - &p.u * &m;
    let vp = &gu - &p.v * (p.v.transpose() * &gu);
    FixedRankTangent { m, up, vp }
}

/// Riemannian Hessian-vector product, including the curvature terms that
/// carry `Sigma^{-1}` factors (these are what blow up as `sigma_r -> 0`):
///
/// ```text
/// Mbar  = U^T H V,
/// Upbar = (I - U U^T)(H V + grad f(X) Vp Sigma^{-1}),
/// Vpbar = (I - V V^T)(H^T U + grad f(X)^T Up Sigma^{-1}),
/// ```
///
/// with `H = hess f(X)[Xdot]`.
pub fn fixedrank_hessian_vec(
    cost: &dyn CostModel,
    p: &FixedRankPoint,
    t: &FixedRankTangent,
) -> FixedRankTangent {
    let x = p.factored();
    let xdot = t.direction(p);
    let hv = cost.hess_right(&x, &xdot, &p.v);
    let hu = cost.hess_left(&x, &xdot, &p.u);
    let g_vp = linalg::divide_columns(&cost.grad_right(&x, &t.vp), &p.sigma);
    let g_up = linalg::divide_columns(&cost.grad_left(&x, &t.up), &p.sigma);

    let m = p.u.transpose() * &hv;
    let up_raw = &hv - &p.u * &m + &g_vp - &p.u * (p.u.transpose() * &g_vp);
    let vp_full = &hu + &g_up;
    let vp_raw = &vp_full - &p.v * (p.v.transpose() * &vp_full);
    FixedRankTangent { m, up: up_raw, vp: vp_raw }
}

/// Metric projection retraction for the fixed-rank manifold: the rank-`r`
/// truncated SVD of `X + Xdot`, computed factored in `O((m + n) r^2)`.
/// Fails with `RankDropped` when the retracted spectrum collapses, signalling
/// that the iterate left the manifold's numerical interior.
pub fn fixedrank_retract(p: &FixedRankPoint, t: &FixedRankTangent) -> Result<FixedRankPoint> {
    let r = p.sigma.len();
    let (m_rows, n_rows) = (p.u.nrows(), p.v.nrows());

    // X + Xdot = [U Up] [[Sigma + M, I], [I, 0]] [V Vp]^T.
    let mut left = DMatrix::zeros(m_rows, 2 * r);
    left.view_mut((0, 0), (m_rows, r)).copy_from(&p.u);
    left.view_mut((0, r), (m_rows, r)).copy_from(&t.up);
    let mut right = DMatrix::zeros(n_rows, 2 * r);
    right.view_mut((0, 0), (n_rows, r)).copy_from(&p.v);
    right.view_mut((0, r), (n_rows, r)).copy_from(&t.vp);

    let (qu, ru) = linalg::thin_qr(&left);
    let (qv, rv) = linalg::thin_qr(&right);

    let mut mid = DMatrix::zeros(2 * r, 2 * r);
    mid.view_mut((0, 0), (r, r))
        .copy_from(&(DMatrix::from_diagonal(&p.sigma) + &t.m));
    mid.view_mut((0, r), (r, r)).copy_from(&DMatrix::identity(r, r));
    mid.view_mut((r, 0), (r, r)).copy_from(&DMatrix::identity(r, r));

    let b = ru * mid * rv.transpose();
    let (ub, sb, vb) = linalg::thin_svd(&b);
    let sigma_new = DVector::from_iterator(r, sb.iter().take(r).copied());
    if sigma_new[0] <= 0.0 || sigma_new[r - 1] < RANK_DROP_REL_TOL * sigma_new[0] {
        return Err(Error::RankDropped {
            ratio: if sigma_new[0] > 0.0 { sigma_new[r - 1] / sigma_new[0] } else { 0.0 },
        });
    }
    let u_new = qu * ub.columns(0, r);
    let v_new = qv * vb.columns(0, r);
    FixedRankPoint::from_factors(u_new, sigma_new, v_new)
}
