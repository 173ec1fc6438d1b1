//! Retractions: Q-factor (first order), metric projection and polar (both
//! second order). All three cost `O((m + n) r^2)` and return a fresh point in
//! factored form.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::geometry;
use crate::linalg;
use crate::manifold::{AmbientVector, ManifoldPoint, MetricParam, TangentVector};

/// Relative eigenvalue-gap threshold below which the metric projection is
/// flagged as potentially non-unique.
pub const EIG_GAP_REL_TOL: f64 = 1e-12;

/// Which retraction to take a step with.
///
/// `MetricProjection` minimizes the ambient distance to the stepped pair and
/// is second order, but may be non-unique at exceptional inputs (flagged via
/// [`MetricProjectionOutcome::eig_gap_warning`]). `Polar` is second order and
/// smoothly defined on the whole tangent bundle. `QFactor` is the cheapest
/// and is first order only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RetractionKind {
    QFactor,
    MetricProjection,
    Polar,
}

impl std::fmt::Display for RetractionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RetractionKind::QFactor => write!(f, "qfactor"),
            RetractionKind::MetricProjection => write!(f, "metric-projection"),
            RetractionKind::Polar => write!(f, "polar"),
        }
    }
}

/// Result of the metric projection retraction, carrying the non-uniqueness
/// diagnostic: `eig_gap_warning` is set when the gap between the `r`-th and
/// `(r+1)`-th eigenvalues falls below [`EIG_GAP_REL_TOL`] times the largest
/// eigenvalue, in which case the minimizer may not be unique.
#[derive(Clone, Debug)]
pub struct MetricProjectionOutcome {
    pub point: ManifoldPoint,
    pub eig_gap_warning: bool,
    pub relative_eig_gap: f64,
}

/// Assembles `W = (X + Xdot) Q = (U Sigma + K)(V^T Q) + U Sigma (Vp^T Q)`
/// and factors it by a thin SVD, producing the retracted representation.
fn assemble_and_factor(pt: &ManifoldPoint, t: &TangentVector, q: &DMatrix<f64>) -> ManifoldPoint {
    let u_sigma = pt.u_sigma();
    let w = (&u_sigma + &t.k) * (pt.v().transpose() * q) + u_sigma * (t.vp.transpose() * q);
    let (u_bar, sigma_bar, h) = linalg::thin_svd(&w);
    ManifoldPoint::from_factors_unchecked(u_bar, sigma_bar, q * h)
}

/// Q-factor retraction: take `Q` from the thin QR of `V + Vp` and return the
/// representation of `((X + Xdot) Q Q^T, I - Q Q^T)`. Always defined:
/// `V^T (V + Vp) = I`, so the factored block has full rank.
pub fn retract_qfactor(pt: &ManifoldPoint, t: &TangentVector) -> ManifoldPoint {
    let (q, _) = linalg::thin_qr(&(pt.v() + &t.vp));
    assemble_and_factor(pt, t, &q)
}

/// Metric projection retraction: the nearest point of the manifold to
/// `(X + Xdot, P + Pdot)` in the ambient `alpha`-norm.
///
/// Steps: thin QR of the `n x 2r` block `[V  Vp]`; form the symmetric
/// `2r x 2r` matrix `D` expressing `(X + Xdot)^T (X + Xdot) + 2 alpha
/// (I - P - Pdot)` in that basis; take the top `r` eigenvectors of `R D R^T`;
/// rotate back and factor. The QR runs on the concatenated block as printed
/// rather than on `Vp` alone, since `D` indexes against `[V  Vp]`.
pub fn retract_metric_projection(
    pt: &ManifoldPoint,
    t: &TangentVector,
    metric: MetricParam,
) -> MetricProjectionOutcome {
    let dims = pt.dims();
    let (n, r) = (dims.n, dims.r);
    let two_alpha = 2.0 * metric.alpha();

    let mut block = DMatrix::zeros(n, 2 * r);
    block.view_mut((0, 0), (n, r)).copy_from(pt.v());
    block.view_mut((0, r), (n, r)).copy_from(&t.vp);
    // Q has min(n, 2r) columns; everything outside its span lies in the
    // kernel of C below.
    let (q, rfac) = linalg::thin_qr(&block);
    let k_dim = q.ncols();

    let uk = pt.u().transpose() * &t.k; // U^T K
    let sigma = pt.sigma();
    let sigma_uk = linalg::scale_rows_vec(&uk, sigma); // Sigma U^T K
    let uk_sigma = linalg::scale_columns(&uk.transpose(), sigma); // K^T U Sigma
    let sigma2a = DVector::from_iterator(r, sigma.iter().map(|&s| s * s + two_alpha));
    let sigma2 = DVector::from_iterator(r, sigma.iter().map(|&s| s * s));
    let d11 = DMatrix::from_diagonal(&sigma2a) + &sigma_uk + &uk_sigma + t.k.transpose() * &t.k;
    let d12 = DMatrix::from_diagonal(&sigma2a) + &uk_sigma;
    let d21 = DMatrix::from_diagonal(&sigma2a) + &sigma_uk;
    let d22 = DMatrix::from_diagonal(&sigma2);
    let mut d = DMatrix::zeros(2 * r, 2 * r);
    d.view_mut((0, 0), (r, r)).copy_from(&d11);
    d.view_mut((0, r), (r, r)).copy_from(&d12);
    d.view_mut((r, 0), (r, r)).copy_from(&d21);
    d.view_mut((r, r), (r, r)).copy_from(&d22);

    let rdr = &rfac * d * rfac.transpose();
    let rdr = (&rdr + rdr.transpose()) * 0.5;
    let (vals, vecs) = linalg::sym_eigen_desc(&rdr);

    // The top r eigenvalues always identify the minimizer: restricted to
    // span(V) the matrix C is at least 2 alpha I (the cross terms vanish
    // because V^T Vp = 0), so lambda_r >= 2 alpha > 0 and no direction from
    // the kernel of C (eigenvalue 0, outside span(Q)) can enter the top r.
    // Uniqueness, however, is judged against the full spectrum of C: the
    // eigenvalues of R D R^T merged with n - k_dim zeros.
    let kernel_dim = n - k_dim;
    let merged_next = if kernel_dim > 0 { vals[r].max(0.0) } else { vals[r] };
    let scale = vals[0].abs().max(f64::MIN_POSITIVE);
    let relative_eig_gap = (vals[r - 1] - merged_next) / scale;
    let eig_gap_warning = relative_eig_gap < EIG_GAP_REL_TOL;

    let v_tilde = q * vecs.columns(0, r);
    let u_sigma = pt.u_sigma();
    let w = (&u_sigma + &t.k) * (pt.v().transpose() * &v_tilde)
        + u_sigma * (t.vp.transpose() * &v_tilde);
    let (u_bar, sigma_bar, h) = linalg::thin_svd(&w);
    let point = ManifoldPoint::from_factors_unchecked(u_bar, sigma_bar, v_tilde * h);
    MetricProjectionOutcome { point, eig_gap_warning, relative_eig_gap }
}

/// Polar retraction: with `Z = V + Vp (I - K^T U Sigma S^{-1})` (always of
/// full rank), returns the representation of `((X + Xdot) Q Q^T, I - Q Q^T)`
/// where `Q = Z (Z^T Z)^{-1/2}`. Second order and smooth on the whole
/// tangent bundle.
pub fn retract_polar(pt: &ManifoldPoint, t: &TangentVector, metric: MetricParam) -> ManifoldPoint {
    let r = pt.dims().r;
    let s = geometry::sfactor(pt, metric);
    let ku = t.k.transpose() * pt.u(); // K^T U
    let mut coeff = DVector::zeros(r);
    for j in 0..r {
        coeff[j] = pt.sigma()[j] / s.diag()[j];
    }
    let t_mat = DMatrix::identity(r, r) - linalg::scale_columns(&ku, &coeff);
    let z = pt.v() + &t.vp * t_mat;
    let gram = z.transpose() * &z;
    let gram = (&gram + gram.transpose()) * 0.5;
    let q = z * linalg::invsqrt_spd(&gram, 1e-300);
    assemble_and_factor(pt, t, &q)
}

/// Dispatches on `kind`, discarding the metric projection diagnostic.
pub fn retract(
    pt: &ManifoldPoint,
    t: &TangentVector,
    metric: MetricParam,
    kind: RetractionKind,
) -> ManifoldPoint {
    match kind {
        RetractionKind::QFactor => retract_qfactor(pt, t),
        RetractionKind::MetricProjection => retract_metric_projection(pt, t, metric).point,
        RetractionKind::Polar => retract_polar(pt, t, metric),
    }
}

/// Estimates the norm of the initial intrinsic acceleration of the curve
/// `c(s) = retract(s t)` by central second differences of the dense curve at
/// `s in {h, 0, -h}`, projected onto the tangent space at `pt`. Second-order
/// retractions drive this to zero up to the difference scheme's error.
/// Dense; desk scale only.
pub fn intrinsic_acceleration_residual(
    pt: &ManifoldPoint,
    t: &TangentVector,
    metric: MetricParam,
    kind: RetractionKind,
) -> f64 {
    let h = 1e-4;
    let eval = |s: f64| retract(pt, &t.scaled(s), metric, kind).to_dense();
    let (x_plus, p_plus) = eval(h);
    let (x_zero, p_zero) = eval(0.0);
    let (x_minus, p_minus) = eval(-h);
    let h2 = h * h;
    let xpp = (x_plus - 2.0 * &x_zero + x_minus) / h2;
    let ppp = (p_plus - 2.0 * &p_zero + p_minus) / h2;
    let ppp = (&ppp + ppp.transpose()) * 0.5;
    let acc = AmbientVector { y: xpp, z: ppp };
    let proj = geometry::project(pt, &acc, metric);
    geometry::norm(pt, &proj, metric)
}

/// Ambient `alpha`-distance between the pair represented by `retracted` and
/// the stepped pair `(X + Xdot, P + Pdot)`. Dense; used by optimality
/// cross-checks of the metric projection.
pub fn ambient_step_distance(
    pt: &ManifoldPoint,
    t: &TangentVector,
    retracted: &ManifoldPoint,
    metric: MetricParam,
) -> f64 {
    let (x, p) = pt.to_dense();
    let step = crate::manifold::tangent_to_ambient(pt, t);
    let (xr, pr) = retracted.to_dense();
    let diff = AmbientVector { y: xr - (x + step.y), z: pr - (p + step.z) };
    geometry::ambient_norm(&diff, metric)
}
