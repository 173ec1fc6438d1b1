//! Self-contained property checks: finite-difference derivative tests,
//! retraction order (Taylor slopes and acceleration residuals), projection
//! algebra, and the gradient/Hessian norm bounds.
//!
//! These helpers deliberately avoid the code paths they measure. Derivative
//! checks only evaluate the cost along retracted curves; projection checks
//! compare against dense ambient arithmetic. They are used by the unit and
//! acceptance tests and by the CLI verification suites.

use nalgebra::DMatrix;

use crate::calculus::{self, CostModel, DenseCost, FactoredMatrix};
use crate::geometry::{self, ambient_inner, ambient_norm};
use crate::linalg;
use crate::manifold::{self, AmbientVector, ManifoldPoint, MetricParam, TangentVector};
use crate::retraction::{self, RetractionKind};

/// Relative error between two scalars, normalized by the larger magnitude.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Decay order of `e` against `s` on a log-log grid: the median of the local
/// slopes between consecutive usable points. Points whose error has hit the
/// round-off floor are dropped. The median resists both the higher-order
/// bend at the top of the grid and residual noise at the bottom, while still
/// separating decay orders cleanly. Returns `None` when fewer than three
/// usable points remain.
pub fn log_log_slope(s: &[f64], e: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = s
        .iter()
        .zip(e)
        .filter(|&(_, &err)| err > floor)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let mut slopes: Vec<f64> = pts
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    slopes.sort_by(|a, b| a.partial_cmp(b).expect("finite slopes"));
    let k = slopes.len();
    Some(if k % 2 == 1 { slopes[k / 2] } else { 0.5 * (slopes[k / 2 - 1] + slopes[k / 2]) })
}

fn lifted_value(cost: &dyn CostModel, pt: &ManifoldPoint) -> f64 {
    cost.value(&FactoredMatrix::from_point(pt))
}

/// Central finite-difference check of the Riemannian gradient along one
/// tangent direction: compares `<grad g, t>` with the derivative of
/// `s -> g(polar-retract(s t))`. The error is normalized by the gradient
/// scale `|grad g| |t|` (which bounds the directional derivative), so
/// directions nearly orthogonal to the gradient do not amplify the scheme's
/// round-off noise into spurious failures.
pub fn gradient_fd_error(
    pt: &ManifoldPoint,
    t: &TangentVector,
    cost: &dyn CostModel,
    metric: MetricParam,
) -> f64 {
    let grad = calculus::riemannian_gradient(pt, cost, metric);
    let ip = geometry::inner(pt, &grad, t, metric);
    let t_norm = geometry::norm(pt, t, metric);
    let h = 1e-6 / t_norm.max(1.0);
    let plus = lifted_value(cost, &retraction::retract_polar(pt, &t.scaled(h), metric));
    let minus = lifted_value(cost, &retraction::retract_polar(pt, &t.scaled(-h), metric));
    let fd = (plus - minus) / (2.0 * h);
    let scale = geometry::norm(pt, &grad, metric) * t_norm;
    (fd - ip).abs() / scale.max(f64::MIN_POSITIVE)
}

/// Worst gradient finite-difference error over `n_dirs` random unit tangents.
pub fn gradient_fd_max_error(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    metric: MetricParam,
    n_dirs: u64,
    seed: u64,
) -> f64 {
    (0..n_dirs)
        .map(|i| {
            let t = manifold::random_tangent(pt, metric, seed + i);
            gradient_fd_error(pt, &t, cost, metric)
        })
        .fold(0.0, f64::max)
}

/// Hessian self-adjointness residual `|<u, H v> - <H u, v>| / (|u| |v|)`,
/// maximized over `n_pairs` random pairs.
pub fn hessian_self_adjointness(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    metric: MetricParam,
    n_pairs: u64,
    seed: u64,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n_pairs {
        let u = manifold::random_tangent(pt, metric, seed + 2 * i);
        let v = manifold::random_tangent(pt, metric, seed + 2 * i + 1);
        let hu = calculus::hessian_vec(pt, &u, cost, metric);
        let hv = calculus::hessian_vec(pt, &v, cost, metric);
        let lhs = geometry::inner(pt, &u, &hv, metric);
        let rhs = geometry::inner(pt, &hu, &v, metric);
        let scale = geometry::norm(pt, &u, metric) * geometry::norm(pt, &v, metric)
            + lhs.abs().max(rhs.abs());
        worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
    }
    worst
}

/// Compares the Hessian quadratic form `<t, Hess g t>` against the dense
/// identity `<Xdot, hess f(X)[Xdot]> + 2 <K, M grad f(X) Vp>` evaluated with
/// dense cost derivatives. Returns the relative error.
pub fn hessian_quadform_error(
    pt: &ManifoldPoint,
    t: &TangentVector,
    cost: &dyn DenseCost,
    metric: MetricParam,
) -> f64 {
    let h = calculus::hessian_vec(pt, t, cost, metric);
    let lhs = geometry::inner(pt, t, &h, metric);

    let (x, _) = pt.to_dense();
    let xdot = FactoredMatrix::from_tangent(pt, t).to_dense();
    let hfx = cost.hess_apply_dense(&x, &xdot);
    let grad = cost.grad_dense(&x);
    let s = geometry::sfactor(pt, metric);
    // M = I - U Sigma^2 S^{-1} U^T, dense.
    let m_dim = pt.dims().m;
    let mut m_op = DMatrix::identity(m_dim, m_dim);
    let mut scaled_u = pt.u().clone();
    for j in 0..pt.dims().r {
        let sj = pt.sigma()[j];
        scaled_u.column_mut(j).scale_mut(sj * sj / s.diag()[j]);
    }
    m_op -= scaled_u * pt.u().transpose();
    let rhs = xdot.dot(&hfx) + 2.0 * t.k.dot(&(&m_op * &grad * &t.vp));
    rel_err(lhs, rhs)
}

/// Second-order Taylor remainder slope along the polar retraction:
/// fits `|g(R(s t)) - g - s <grad, t> - s^2/2 <t, Hess t>|` against `s` on a
/// log-log grid over `s in [1e-4, 1e-1]`. A second-order retraction paired
/// with a correct Hessian gives slope >= 3 up to round-off.
pub fn second_order_taylor_slope(
    pt: &ManifoldPoint,
    t: &TangentVector,
    cost: &dyn CostModel,
    metric: MetricParam,
) -> Option<f64> {
    let g0 = lifted_value(cost, pt);
    let grad = calculus::riemannian_gradient(pt, cost, metric);
    let slope1 = geometry::inner(pt, &grad, t, metric);
    let ht = calculus::hessian_vec(pt, t, cost, metric);
    let slope2 = geometry::inner(pt, t, &ht, metric);

    let grid: Vec<f64> = (0..=12).map(|i| 10f64.powf(-1.0 - 0.25 * i as f64)).collect();
    let errs: Vec<f64> = grid
        .iter()
        .map(|&s| {
            let g = lifted_value(cost, &retraction::retract_polar(pt, &t.scaled(s), metric));
            (g - g0 - s * slope1 - 0.5 * s * s * slope2).abs()
        })
        .collect();
    log_log_slope(&grid, &errs, 1e-14 * (1.0 + g0.abs()))
}

/// First-order retraction check: slope of the ambient distance between the
/// retracted curve and the linearized curve, `|R(s t) - (X + s Xdot,
/// P + s Pdot)|`, which must decay at least quadratically.
pub fn retraction_first_order_slope(
    pt: &ManifoldPoint,
    t: &TangentVector,
    metric: MetricParam,
    kind: RetractionKind,
) -> Option<f64> {
    let (x, p) = pt.to_dense();
    let step = manifold::tangent_to_ambient(pt, t);
    let grid: Vec<f64> = (0..=12).map(|i| 10f64.powf(-1.0 - 0.25 * i as f64)).collect();
    let errs: Vec<f64> = grid
        .iter()
        .map(|&s| {
            let out = retraction::retract(pt, &t.scaled(s), metric, kind);
            let (xr, pr) = out.to_dense();
            let diff = AmbientVector { y: xr - (&x + &step.y * s), z: pr - (&p + &step.z * s) };
            ambient_norm(&diff, metric)
        })
        .collect();
    log_log_slope(&grid, &errs, 1e-13 * (1.0 + x.norm()))
}

/// Residual of the retraction base-point axiom `R(0) = (X, P)`, measured on
/// the dense represented matrices (the factored distance formula cancels
/// catastrophically below `sqrt(eps)` and cannot resolve this residual).
pub fn retraction_zero_residual(
    pt: &ManifoldPoint,
    t: &TangentVector,
    metric: MetricParam,
    kind: RetractionKind,
) -> f64 {
    let out = retraction::retract(pt, &t.scaled(0.0), metric, kind);
    let (x, p) = pt.to_dense();
    let (xo, po) = out.to_dense();
    ((xo - x).norm()).max((po - p).norm())
}

/// Projection idempotence residual on a random dense ambient element.
pub fn projection_idempotence_residual(pt: &ManifoldPoint, metric: MetricParam, seed: u64) -> f64 {
    let amb = random_ambient(pt, seed);
    let t = geometry::project(pt, &amb, metric);
    let t2 = geometry::project(pt, &manifold::tangent_to_ambient(pt, &t), metric);
    let diff = t2.lincomb(1.0, -1.0, &t);
    geometry::norm(pt, &diff, metric) / (1.0 + geometry::norm(pt, &t, metric))
}

/// Pythagoras residual `| |amb|^2 - |proj|^2 - |amb - proj|^2 | / |amb|^2`.
pub fn pythagoras_residual(pt: &ManifoldPoint, metric: MetricParam, seed: u64) -> f64 {
    let amb = random_ambient(pt, seed);
    let t = geometry::project(pt, &amb, metric);
    let img = manifold::tangent_to_ambient(pt, &t);
    let resid = AmbientVector { y: &amb.y - &img.y, z: &amb.z - &img.z };
    let total = ambient_norm(&amb, metric).powi(2);
    let split = geometry::norm(pt, &t, metric).powi(2) + ambient_norm(&resid, metric).powi(2);
    (total - split).abs() / total.max(f64::MIN_POSITIVE)
}

/// Agreement between the factored inner product and the dense ambient one.
pub fn inner_ambient_agreement(pt: &ManifoldPoint, metric: MetricParam, seed: u64) -> f64 {
    let t1 = manifold::random_tangent(pt, metric, seed);
    let t2 = manifold::random_tangent(pt, metric, seed + 1);
    let lhs = geometry::inner(pt, &t1, &t2, metric);
    let a1 = manifold::tangent_to_ambient(pt, &t1);
    let a2 = manifold::tangent_to_ambient(pt, &t2);
    let rhs = ambient_inner(&a1, &a2, metric);
    (lhs - rhs).abs() / (1.0 + lhs.abs().max(rhs.abs()))
}

/// Norm of the projection of a random normal-space sample, relative to the
/// sample's ambient norm.
pub fn normal_projection_residual(pt: &ManifoldPoint, metric: MetricParam, seed: u64) -> f64 {
    let nrm = geometry::normal_basis_sample(pt, metric, seed);
    let t = geometry::project(pt, &nrm, metric);
    geometry::norm(pt, &t, metric) / (1.0 + ambient_norm(&nrm, metric))
}

/// Gradient norm bound check: returns `(|grad g|, |grad f|_F)`; the first
/// may not exceed the second.
pub fn gradient_bound_values(
    pt: &ManifoldPoint,
    cost: &dyn DenseCost,
    metric: MetricParam,
) -> (f64, f64) {
    let grad = calculus::riemannian_gradient(pt, cost, metric);
    let lifted = geometry::norm(pt, &grad, metric);
    let dense = cost.grad_dense(&pt.to_dense().0).norm();
    (lifted, dense)
}

/// Power-iteration estimate of the Riemannian Hessian operator norm at `pt`
/// (largest absolute eigenvalue), run in the metric inner product.
pub fn hessian_op_norm_estimate(
    pt: &ManifoldPoint,
    cost: &dyn CostModel,
    metric: MetricParam,
    iters: usize,
    seed: u64,
) -> f64 {
    let mut t = manifold::random_tangent(pt, metric, seed);
    let mut estimate = 0.0f64;
    for _ in 0..iters {
        let ht = calculus::hessian_vec(pt, &t, cost, metric);
        let n = geometry::norm(pt, &ht, metric);
        if n <= f64::MIN_POSITIVE {
            return 0.0;
        }
        estimate = geometry::inner(pt, &t, &ht, metric).abs();
        t = ht.scaled(1.0 / n);
    }
    estimate
}

fn random_ambient(pt: &ManifoldPoint, seed: u64) -> AmbientVector {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (m, n) = (pt.dims().m, pt.dims().n);
    let y = linalg::gaussian_matrix(&mut rng, m, n);
    let z_raw = linalg::gaussian_matrix(&mut rng, n, n);
    let z = (&z_raw + z_raw.transpose()) * 0.5;
    AmbientVector { y, z }
}
