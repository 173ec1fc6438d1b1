//! Geometry-agnostic solvers: gradient descent with Armijo backtracking and
//! a Riemannian trust-region method with a truncated-CG subproblem solver.
//!
//! Solvers drive any type implementing [`Geometry`]; adapters are provided
//! for the desingularized manifold, the `L R^T` parameterization, and the
//! fixed-rank embedded manifold, all wired to the same [`CostModel`].
//! A solver run is deterministic given its inputs (no internal randomness).

use std::time::Instant;

use serde::Serialize;

use crate::baselines::{
    fixedrank_gradient, fixedrank_hessian_vec, fixedrank_inner, fixedrank_retract, FixedRankPoint,
    FixedRankTangent, LrPoint, LrTangent,
};
use crate::baselines::{lr_gradient, lr_hessian_vec, lr_inner, lr_value};
use crate::calculus::{self, CostModel, FactoredMatrix};
use crate::error::Result;
use crate::geometry;
use crate::manifold::{ManifoldPoint, MetricParam, TangentVector};
use crate::retraction::{self, RetractionKind};

/// The contract solvers consume: cost evaluation, first- and second-order
/// oracles, the metric, linear operations on tangent vectors, and a
/// retraction. All quantities are at the given base point.
pub trait Geometry {
    type Point: Clone;
    type Tangent: Clone;

    fn value(&self, p: &Self::Point) -> f64;
    fn gradient(&self, p: &Self::Point) -> Self::Tangent;
    fn hessian_vec(&self, p: &Self::Point, t: &Self::Tangent) -> Self::Tangent;
    fn inner(&self, p: &Self::Point, a: &Self::Tangent, b: &Self::Tangent) -> f64;
    fn norm(&self, p: &Self::Point, t: &Self::Tangent) -> f64 {
        self.inner(p, t, t).max(0.0).sqrt()
    }
    fn scale(&self, p: &Self::Point, s: f64, t: &Self::Tangent) -> Self::Tangent;
    /// `a * x + b * y`.
    fn lincomb(
        &self,
        p: &Self::Point,
        a: f64,
        x: &Self::Tangent,
        b: f64,
        y: &Self::Tangent,
    ) -> Self::Tangent;
    fn retract(&self, p: &Self::Point, t: &Self::Tangent) -> Result<Retracted<Self::Point>>;
}

/// A retraction result plus whether a configured fallback kicked in.
pub struct Retracted<P> {
    pub point: P,
    pub fallback_used: bool,
}

/// Solver parameters shared by both methods.
#[derive(Clone, Debug, Serialize)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    /// Stop when the Riemannian gradient norm falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step decreases the cost by less than this.
    pub cost_tol: f64,
    /// Initial trust-region radius; `None` uses `|grad g(x0)| / 8`.
    pub tr_initial_radius: Option<f64>,
    /// Radius cap; `None` uses 100x the initial radius.
    pub tr_max_radius: Option<f64>,
    /// Exponent of the truncated-CG residual stopping rule.
    pub tcg_theta: f64,
    /// Linear factor of the truncated-CG residual stopping rule.
    pub tcg_kappa: f64,
    pub tcg_max_inner: usize,
    pub ls_armijo_c: f64,
    pub ls_backtrack: f64,
    pub ls_max_halvings: usize,
    pub retraction: RetractionKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer_iters: 1000,
            grad_tol: 1e-6,
            cost_tol: 1e-18,
            tr_initial_radius: None,
            tr_max_radius: None,
            tcg_theta: std::f64::consts::SQRT_2 - 1.0,
            tcg_kappa: 0.1,
            tcg_max_inner: 500,
            ls_armijo_c: 1e-4,
            ls_backtrack: 0.5,
            ls_max_halvings: 60,
            retraction: RetractionKind::MetricProjection,
        }
    }
}

impl SolverConfig {
    /// Checks the structural invariants: positive tolerances and a
    /// backtracking factor strictly inside `(0, 1)`.
    pub fn validate(&self) -> Result<()> {
        let positive = [self.grad_tol, self.cost_tol, self.tcg_theta, self.tcg_kappa, self.ls_armijo_c];
        if positive.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(crate::error::Error::InvalidSolverConfig(
                "tolerances and line-search constants must be positive and finite",
            ));
        }
        if !(self.ls_backtrack > 0.0 && self.ls_backtrack < 1.0) {
            return Err(crate::error::Error::InvalidSolverConfig(
                "ls_backtrack must lie strictly between 0 and 1",
            ));
        }
        Ok(())
    }
}

/// Why a solver stopped.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TerminationReason {
    GradTol,
    CostProgress,
    MaxIters,
    LineSearchStalled,
    TrustRegionCollapsed,
    /// The geometry refused a step (e.g. rank drop on the fixed-rank
    /// manifold). The solver returns the last valid iterate.
    GeometryBreakdown(String),
}

/// One accepted iteration. Row 0 describes the initial point.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
    /// Trust-region radius, or accepted step size for gradient descent.
    pub radius_or_step: f64,
    /// Inner CG iterations, or line-search halvings.
    pub inner_iters: usize,
    /// Seconds since the solver started.
    pub wall_time_s: f64,
    /// Cumulative count of retraction fallbacks so far.
    pub retraction_fallbacks: usize,
}

/// Per-run record: one row per accepted iteration (plus the initial row),
/// with cost non-increasing across rows.
#[derive(Clone, Debug, Serialize)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
    pub termination: TerminationReason,
    /// Total outer iterations, accepted or not.
    pub outer_iters: usize,
    /// Defensive diagnostic: truncated-CG steps with non-positive predicted
    /// decrease (should not occur by construction).
    pub model_nondescent_events: usize,
}

impl SolverTrace {
    pub fn final_cost(&self) -> f64 {
        self.rows.last().map(|r| r.cost).unwrap_or(f64::NAN)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.rows.last().map(|r| r.grad_norm).unwrap_or(f64::NAN)
    }

    pub fn accepted_iters(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn retraction_fallbacks(&self) -> usize {
        self.rows.last().map(|r| r.retraction_fallbacks).unwrap_or(0)
    }
}

/// Riemannian gradient descent with Armijo backtracking from a unit trial
/// step. Accepts when `g(R(-s grad)) <= g - c s |grad|^2`; fails over to
/// [`TerminationReason::LineSearchStalled`] when `ls_max_halvings`
/// consecutive halvings cannot produce decrease (the best iterate so far is
/// returned, flagged).
pub fn gradient_descent<G: Geometry>(
    geom: &G,
    start: &G::Point,
    config: &SolverConfig,
) -> (G::Point, SolverTrace) {
    let clock = Instant::now();
    let mut x = start.clone();
    let mut cost = geom.value(&x);
    let mut grad = geom.gradient(&x);
    let mut grad_norm = geom.norm(&x, &grad);
    let mut fallbacks = 0usize;

    let mut rows = vec![TraceRow {
        iter: 0,
        cost,
        grad_norm,
        step_norm: 0.0,
        radius_or_step: 0.0,
        inner_iters: 0,
        wall_time_s: clock.elapsed().as_secs_f64(),
        retraction_fallbacks: 0,
    }];

    let mut termination = TerminationReason::MaxIters;
    let mut outer = 0usize;
    for _ in 0..config.max_outer_iters {
        if grad_norm <= config.grad_tol {
            termination = TerminationReason::GradTol;
            break;
        }
        outer += 1;

        let mut step = 1.0f64;
        let mut accepted: Option<(Retracted<G::Point>, f64, usize)> = None;
        for halving in 0..=config.ls_max_halvings {
            let direction = geom.scale(&x, -step, &grad);
            let trial = match geom.retract(&x, &direction) {
                Ok(t) => t,
                Err(e) => {
                    let trace = SolverTrace {
                        rows,
                        termination: TerminationReason::GeometryBreakdown(e.to_string()),
                        outer_iters: outer,
                        model_nondescent_events: 0,
                    };
                    return (x, trace);
                }
            };
            let trial_cost = geom.value(&trial.point);
            if trial_cost <= cost - config.ls_armijo_c * step * grad_norm * grad_norm {
                accepted = Some((trial, trial_cost, halving));
                break;
            }
            step *= config.ls_backtrack;
        }

        let Some((trial, trial_cost, halvings)) = accepted else {
            termination = TerminationReason::LineSearchStalled;
            break;
        };

        let decrease = cost - trial_cost;
        fallbacks += trial.fallback_used as usize;
        x = trial.point;
        cost = trial_cost;
        grad = geom.gradient(&x);
        grad_norm = geom.norm(&x, &grad);
        rows.push(TraceRow {
            iter: rows.len(),
            cost,
            grad_norm,
            step_norm: step * rows[rows.len() - 1].grad_norm,
            radius_or_step: step,
            inner_iters: halvings,
            wall_time_s: clock.elapsed().as_secs_f64(),
            retraction_fallbacks: fallbacks,
        });

        if decrease <= config.cost_tol {
            termination = TerminationReason::CostProgress;
            break;
        }
    }
    if termination == TerminationReason::MaxIters && grad_norm <= config.grad_tol {
        termination = TerminationReason::GradTol;
    }

    let trace = SolverTrace { rows, termination, outer_iters: outer, model_nondescent_events: 0 };
    (x, trace)
}

struct TcgOutcome<T> {
    step: T,
    inner_iters: usize,
    predicted_decrease: f64,
    step_norm: f64,
}

/// Steihaug-Toint truncated CG on the trust-region subproblem
/// `min <grad, t> + 0.5 <t, H t>` subject to `|t| <= radius`, with the
/// residual stopping rule `|r_k| <= |r_0| min(kappa, |r_0|^theta)`.
///
/// Starting from `t = 0`, the first iteration realizes (at least) the Cauchy
/// decrease and every subsequent CG step decreases the model further, so the
/// returned step always carries a non-negative predicted decrease.
fn truncated_cg<G: Geometry>(
    geom: &G,
    x: &G::Point,
    grad: &G::Tangent,
    grad_norm: f64,
    radius: f64,
    config: &SolverConfig,
) -> TcgOutcome<G::Tangent> {
    let mut t = geom.scale(x, 0.0, grad);
    let mut r = grad.clone();
    let mut d = geom.scale(x, -1.0, grad);
    let stop_tol = grad_norm * config.tcg_kappa.min(grad_norm.powf(config.tcg_theta));

    let mut rr = grad_norm * grad_norm;
    let mut t_norm2 = 0.0f64;
    let mut inner_iters = 0usize;

    let boundary_step = |t: &G::Tangent, d: &G::Tangent, t_norm2: f64| -> (G::Tangent, f64) {
        let dd = geom.inner(x, d, d);
        let td = geom.inner(x, t, d);
        let disc = (td * td + dd * (radius * radius - t_norm2)).max(0.0);
        let tau = (-td + disc.sqrt()) / dd;
        (geom.lincomb(x, 1.0, t, tau, d), radius)
    };

    let mut step_norm = 0.0f64;
    for _ in 0..config.tcg_max_inner {
        inner_iters += 1;
        let hd = geom.hessian_vec(x, &d);
        let dhd = geom.inner(x, &d, &hd);
        if dhd <= 0.0 {
            let (step, norm) = boundary_step(&t, &d, t_norm2);
            t = step;
            step_norm = norm;
            break;
        }
        let alpha = rr / dhd;
        let t_next = geom.lincomb(x, 1.0, &t, alpha, &d);
        let t_next_norm2 = geom.inner(x, &t_next, &t_next);
        if t_next_norm2.sqrt() >= radius {
            let (step, norm) = boundary_step(&t, &d, t_norm2);
            t = step;
            step_norm = norm;
            break;
        }
        t = t_next;
        t_norm2 = t_next_norm2;
        step_norm = t_norm2.max(0.0).sqrt();
        r = geom.lincomb(x, 1.0, &r, alpha, &hd);
        let rr_next = geom.inner(x, &r, &r);
        if rr_next.max(0.0).sqrt() <= stop_tol {
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        d = geom.lincomb(x, -1.0, &r, beta, &d);
    }

    // Model decrease evaluated directly on the returned step.
    let ht = geom.hessian_vec(x, &t);
    let predicted_decrease =
        -(geom.inner(x, grad, &t) + 0.5 * geom.inner(x, &t, &ht));
    TcgOutcome { step: t, inner_iters, predicted_decrease, step_norm }
}

/// Riemannian trust-region method with truncated CG. Accepts a step when the
/// actual-to-predicted decrease ratio exceeds 0.1, expands the radius (x2,
/// capped) above 0.75 and shrinks it (x0.25) below 0.25.
pub fn trust_region<G: Geometry>(
    geom: &G,
    start: &G::Point,
    config: &SolverConfig,
) -> (G::Point, SolverTrace) {
    let clock = Instant::now();
    let mut x = start.clone();
    let mut cost = geom.value(&x);
    let mut grad = geom.gradient(&x);
    let mut grad_norm = geom.norm(&x, &grad);

    let radius0 = config.tr_initial_radius.unwrap_or(grad_norm / 8.0).max(f64::MIN_POSITIVE);
    let radius_max = config.tr_max_radius.unwrap_or(100.0 * radius0);
    let mut radius = radius0;
    let mut fallbacks = 0usize;
    let mut nondescent = 0usize;

    let mut rows = vec![TraceRow {
        iter: 0,
        cost,
        grad_norm,
        step_norm: 0.0,
        radius_or_step: radius,
        inner_iters: 0,
        wall_time_s: clock.elapsed().as_secs_f64(),
        retraction_fallbacks: 0,
    }];

    let mut termination = TerminationReason::MaxIters;
    let mut outer = 0usize;
    for _ in 0..config.max_outer_iters {
        if grad_norm <= config.grad_tol {
            termination = TerminationReason::GradTol;
            break;
        }
        if radius < 1e-16 * radius0 {
            termination = TerminationReason::TrustRegionCollapsed;
            break;
        }
        outer += 1;

        let tcg = truncated_cg(geom, &x, &grad, grad_norm, radius, config);
        if tcg.predicted_decrease <= 0.0 {
            nondescent += 1;
        }

        let trial = match geom.retract(&x, &tcg.step) {
            Ok(t) => t,
            Err(e) => {
                termination = TerminationReason::GeometryBreakdown(e.to_string());
                break;
            }
        };
        let trial_cost = geom.value(&trial.point);
        let rho = (cost - trial_cost) / (tcg.predicted_decrease + 1e-15);

        if rho > 0.1 {
            let decrease = cost - trial_cost;
            fallbacks += trial.fallback_used as usize;
            x = trial.point;
            cost = trial_cost;
            grad = geom.gradient(&x);
            grad_norm = geom.norm(&x, &grad);
            rows.push(TraceRow {
                iter: rows.len(),
                cost,
                grad_norm,
                step_norm: tcg.step_norm,
                radius_or_step: radius,
                inner_iters: tcg.inner_iters,
                wall_time_s: clock.elapsed().as_secs_f64(),
                retraction_fallbacks: fallbacks,
            });
            if decrease <= config.cost_tol {
                termination = TerminationReason::CostProgress;
                break;
            }
        }

        if rho > 0.75 {
            radius = (2.0 * radius).min(radius_max);
        } else if rho < 0.25 {
            radius *= 0.25;
        }
    }
    if termination == TerminationReason::MaxIters && grad_norm <= config.grad_tol {
        termination = TerminationReason::GradTol;
    }

    let trace =
        SolverTrace { rows, termination, outer_iters: outer, model_nondescent_events: nondescent };
    (x, trace)
}

// ---------------------------------------------------------------------------
// Geometry adapters
// ---------------------------------------------------------------------------

/// Desingularized geometry bound to a cost model. The retraction defaults to
/// metric projection with a polar fallback whenever the eigenvalue-gap
/// diagnostic flags a potentially non-unique projection.
pub struct DesingGeometry<'a, C: CostModel> {
    pub cost: &'a C,
    pub metric: MetricParam,
    pub retraction: RetractionKind,
    pub polar_fallback: bool,
}

impl<'a, C: CostModel> DesingGeometry<'a, C> {
    pub fn new(cost: &'a C, metric: MetricParam, retraction: RetractionKind) -> Self {
        Self { cost, metric, retraction, polar_fallback: true }
    }
}

impl<C: CostModel> Geometry for DesingGeometry<'_, C> {
    type Point = ManifoldPoint;
    type Tangent = TangentVector;

    fn value(&self, p: &ManifoldPoint) -> f64 {
        self.cost.value(&FactoredMatrix::from_point(p))
    }

    fn gradient(&self, p: &ManifoldPoint) -> TangentVector {
        calculus::riemannian_gradient(p, self.cost, self.metric)
    }

    fn hessian_vec(&self, p: &ManifoldPoint, t: &TangentVector) -> TangentVector {
        calculus::hessian_vec(p, t, self.cost, self.metric)
    }

    fn inner(&self, p: &ManifoldPoint, a: &TangentVector, b: &TangentVector) -> f64 {
        geometry::inner(p, a, b, self.metric)
    }

    fn scale(&self, _p: &ManifoldPoint, s: f64, t: &TangentVector) -> TangentVector {
        t.scaled(s)
    }

    fn lincomb(
        &self,
        _p: &ManifoldPoint,
        a: f64,
        x: &TangentVector,
        b: f64,
        y: &TangentVector,
    ) -> TangentVector {
        x.lincomb(a, b, y)
    }

    fn retract(&self, p: &ManifoldPoint, t: &TangentVector) -> Result<Retracted<ManifoldPoint>> {
        match self.retraction {
            RetractionKind::QFactor => Ok(Retracted {
                point: retraction::retract_qfactor(p, t),
                fallback_used: false,
            }),
            RetractionKind::Polar => Ok(Retracted {
                point: retraction::retract_polar(p, t, self.metric),
                fallback_used: false,
            }),
            RetractionKind::MetricProjection => {
                let out = retraction::retract_metric_projection(p, t, self.metric);
                if out.eig_gap_warning && self.polar_fallback {
                    Ok(Retracted {
                        point: retraction::retract_polar(p, t, self.metric),
                        fallback_used: true,
                    })
                } else {
                    Ok(Retracted { point: out.point, fallback_used: false })
                }
            }
        }
    }
}

/// Euclidean geometry of the `L R^T` parameterization: the retraction is
/// plain addition and the metric is the Frobenius product on the stacked
/// factors.
pub struct LrGeometry<'a, C: CostModel> {
    pub cost: &'a C,
}

impl<C: CostModel> Geometry for LrGeometry<'_, C> {
    type Point = LrPoint;
    type Tangent = LrTangent;

    fn value(&self, p: &LrPoint) -> f64 {
        lr_value(self.cost, p)
    }

    fn gradient(&self, p: &LrPoint) -> LrTangent {
        lr_gradient(self.cost, p)
    }

    fn hessian_vec(&self, p: &LrPoint, t: &LrTangent) -> LrTangent {
        lr_hessian_vec(self.cost, p, t)
    }

    fn inner(&self, _p: &LrPoint, a: &LrTangent, b: &LrTangent) -> f64 {
        lr_inner(a, b)
    }

    fn scale(&self, _p: &LrPoint, s: f64, t: &LrTangent) -> LrTangent {
        t.scaled(s)
    }

    fn lincomb(&self, _p: &LrPoint, a: f64, x: &LrTangent, b: f64, y: &LrTangent) -> LrTangent {
        x.lincomb(a, b, y)
    }

    fn retract(&self, p: &LrPoint, t: &LrTangent) -> Result<Retracted<LrPoint>> {
        Ok(Retracted {
            point: LrPoint { l: &p.l + &t.dl, r: &p.r + &t.dr },
            fallback_used: false,
        })
    }
}

/// Fixed-rank embedded geometry. Retraction errors with
/// [`crate::Error::RankDropped`] propagate to the solver, which stops with
/// [`TerminationReason::GeometryBreakdown`].
pub struct FixedRankGeometry<'a, C: CostModel> {
    pub cost: &'a C,
}

impl<C: CostModel> Geometry for FixedRankGeometry<'_, C> {
    type Point = FixedRankPoint;
    type Tangent = FixedRankTangent;

    fn value(&self, p: &FixedRankPoint) -> f64 {
        self.cost.value(&p.factored())
    }

    fn gradient(&self, p: &FixedRankPoint) -> FixedRankTangent {
        fixedrank_gradient(self.cost, p)
    }

    fn hessian_vec(&self, p: &FixedRankPoint, t: &FixedRankTangent) -> FixedRankTangent {
        fixedrank_hessian_vec(self.cost, p, t)
    }

    fn inner(&self, _p: &FixedRankPoint, a: &FixedRankTangent, b: &FixedRankTangent) -> f64 {
        fixedrank_inner(a, b)
    }

    fn scale(&self, _p: &FixedRankPoint, s: f64, t: &FixedRankTangent) -> FixedRankTangent {
        t.scaled(s)
    }

    fn lincomb(
        &self,
        _p: &FixedRankPoint,
        a: f64,
        x: &FixedRankTangent,
        b: f64,
        y: &FixedRankTangent,
    ) -> FixedRankTangent {
        x.lincomb(a, b, y)
    }

    fn retract(&self, p: &FixedRankPoint, t: &FixedRankTangent) -> Result<Retracted<FixedRankPoint>> {
        Ok(Retracted { point: fixedrank_retract(p, t)?, fallback_used: false })
    }
}
