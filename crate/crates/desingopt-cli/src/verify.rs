//! On-demand verification suites. Each suite runs a batch of property checks
//! at desk scale and prints one line per check with the measured residual or
//! slope against its bound.

use desingopt::calculus::{self, PowerIterParams};
use desingopt::checks;
use desingopt::cost::{CompletionProblem, QuadraticCost, SvSpec};
use desingopt::manifold::{self, ManifoldDims, MetricParam};
use desingopt::retraction::{intrinsic_acceleration_residual, RetractionKind};

use crate::{HarnessError, Result};

/// One verified property.
pub struct CheckLine {
    pub name: String,
    /// Measured residual (or slope).
    pub measured: f64,
    /// The bound it is compared against.
    pub bound: f64,
    /// `true` when the measurement must stay below the bound; `false` when it
    /// must stay above (slopes).
    pub upper: bool,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        if self.upper {
            self.measured <= self.bound
        } else {
            self.measured >= self.bound
        }
    }
}

pub struct SuiteReport {
    pub name: &'static str,
    pub checks: Vec<CheckLine>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckLine::passed)
    }

    pub fn print(&self) {
        println!("== suite: {} ==", self.name);
        for check in &self.checks {
            let relation = if check.upper { "<=" } else { ">=" };
            println!(
                "[{}] {:55} measured={:>12.4e} {} {:.4e}",
                if check.passed() { "PASS" } else { "FAIL" },
                check.name,
                check.measured,
                relation,
                check.bound,
            );
        }
    }
}

fn upper(name: impl Into<String>, measured: f64, bound: f64) -> CheckLine {
    CheckLine { name: name.into(), measured, bound, upper: true }
}

fn lower(name: impl Into<String>, measured: f64, bound: f64) -> CheckLine {
    CheckLine { name: name.into(), measured, bound, upper: false }
}

/// Metric and projection algebra at `m, n <= 12`.
pub fn geometry_suite(seed: u64) -> SuiteReport {
    let dims = ManifoldDims::new(12, 11, 3).unwrap();
    let pt = manifold::random_point_in(dims, (0.0, 1.5), seed);
    let mut checks_out = Vec::new();
    for alpha in [0.05, 0.5, 5.0] {
        let metric = MetricParam::new(alpha).unwrap();
        let mut inner_worst = 0.0f64;
        let mut idem_worst = 0.0f64;
        let mut pyth_worst = 0.0f64;
        let mut normal_worst = 0.0f64;
        for i in 0..10 {
            inner_worst = inner_worst.max(checks::inner_ambient_agreement(&pt, metric, seed + i));
            idem_worst =
                idem_worst.max(checks::projection_idempotence_residual(&pt, metric, seed + 20 + i));
            pyth_worst = pyth_worst.max(checks::pythagoras_residual(&pt, metric, seed + 40 + i));
            normal_worst =
                normal_worst.max(checks::normal_projection_residual(&pt, metric, seed + 60 + i));
        }
        checks_out.push(upper(format!("inner vs ambient oracle (alpha={alpha})"), inner_worst, 1e-12));
        checks_out.push(upper(format!("projection idempotence (alpha={alpha})"), idem_worst, 1e-12));
        checks_out.push(upper(format!("projection Pythagoras (alpha={alpha})"), pyth_worst, 1e-10));
        checks_out.push(upper(format!("normal samples project to 0 (alpha={alpha})"), normal_worst, 1e-12));
    }
    SuiteReport { name: "geometry", checks: checks_out }
}

/// Retraction axioms, first-order slopes, and acceleration residuals.
pub fn retractions_suite(seed: u64) -> SuiteReport {
    let dims = ManifoldDims::new(12, 10, 2).unwrap();
    let metric = MetricParam::new(0.5).unwrap();
    let mut out = Vec::new();
    let kinds = [RetractionKind::QFactor, RetractionKind::MetricProjection, RetractionKind::Polar];
    for kind in kinds {
        let mut zero_worst = 0.0f64;
        let mut slope_worst = f64::INFINITY;
        for i in 0..5 {
            let pt = manifold::random_point_in(dims, (0.0, 1.5), seed + i);
            let t = manifold::random_tangent(&pt, metric, seed + 100 + i);
            zero_worst = zero_worst.max(checks::retraction_zero_residual(&pt, &t, metric, kind));
            if let Some(slope) = checks::retraction_first_order_slope(&pt, &t, metric, kind) {
                slope_worst = slope_worst.min(slope);
            }
        }
        out.push(upper(format!("{kind}: base point axiom"), zero_worst, 1e-12));
        out.push(lower(format!("{kind}: first-order Taylor slope"), slope_worst, 1.9));
    }
    for kind in [RetractionKind::MetricProjection, RetractionKind::Polar] {
        let mut worst = 0.0f64;
        for i in 0..10 {
            let pt = manifold::random_point_in(dims, (0.2, 1.5), seed + 200 + i);
            let t = manifold::random_tangent(&pt, metric, seed + 300 + i);
            let norm = desingopt::geometry::norm(&pt, &t, metric);
            let res = intrinsic_acceleration_residual(&pt, &t, metric, kind);
            worst = worst.max(res / (1.0 + norm * norm));
        }
        out.push(upper(format!("{kind}: intrinsic acceleration residual"), worst, 1e-5));
    }
    SuiteReport { name: "retractions", checks: out }
}

/// Gradient/Hessian finite-difference checks and the norm bounds.
pub fn calculus_suite(seed: u64) -> SuiteReport {
    let dims = ManifoldDims::new(30, 28, 3).unwrap();
    let metric = MetricParam::new(0.5).unwrap();
    let problem =
        CompletionProblem::generate(30, 28, 3, 3, 3.0, SvSpec::Uniform { lo: 0.5, hi: 1.0 }, seed)
            .unwrap();
    let quad = QuadraticCost::new(
        manifold::random_point_in(dims, (0.5, 1.5), seed + 1).to_dense().0,
    );
    let pt = manifold::random_point_in(dims, (0.0, 1.0), seed + 2);

    let mut out = Vec::new();
    out.push(upper(
        "completion: gradient FD max relative error",
        checks::gradient_fd_max_error(&pt, &problem, metric, 20, seed + 10),
        1e-5,
    ));
    out.push(upper(
        "quadratic: gradient FD max relative error",
        checks::gradient_fd_max_error(&pt, &quad, metric, 20, seed + 30),
        1e-5,
    ));
    out.push(upper(
        "completion: Hessian self-adjointness",
        checks::hessian_self_adjointness(&pt, &problem, metric, 25, seed + 50),
        1e-11,
    ));
    let mut quadform_worst = 0.0f64;
    for i in 0..10 {
        let t = manifold::random_tangent(&pt, metric, seed + 100 + i);
        quadform_worst =
            quadform_worst.max(checks::hessian_quadform_error(&pt, &t, &problem, metric));
    }
    out.push(upper("completion: Hessian quadratic-form identity", quadform_worst, 1e-11));

    let t = manifold::random_tangent(&pt, metric, seed + 200).scaled(0.5);
    let slope = checks::second_order_taylor_slope(&pt, &t, &problem, metric).unwrap_or(0.0);
    out.push(lower("completion: second-order Taylor slope (polar)", slope, 2.9));

    let (lifted, dense) = checks::gradient_bound_values(&pt, &problem, metric);
    out.push(upper("gradient norm bound |grad g| / |grad f|_F", lifted / dense, 1.0 + 1e-12));
    let bound = calculus::hessian_norm_bound(&pt, &problem, metric, PowerIterParams::default());
    let estimate = checks::hessian_op_norm_estimate(&pt, &problem, metric, 60, seed + 300);
    out.push(upper("Hessian operator-norm estimate vs bound", estimate, bound + 1e-8));

    SuiteReport { name: "calculus", checks: out }
}

/// Runs the selected suites and prints their reports. Errors when any check
/// fails.
pub fn run(selector: &str, seed: u64) -> Result<()> {
    let reports: Vec<SuiteReport> = match selector {
        "geometry" => vec![geometry_suite(seed)],
        "retractions" => vec![retractions_suite(seed)],
        "calculus" => vec![calculus_suite(seed)],
        "all" => vec![geometry_suite(seed), retractions_suite(seed), calculus_suite(seed)],
        other => {
            return Err(HarnessError::Config(format!(
                "unknown suite '{other}' (expected geometry|retractions|calculus|all)"
            )));
        }
    };
    let mut all_passed = true;
    for report in &reports {
        report.print();
        all_passed &= report.passed();
    }
    if all_passed {
        Ok(())
    } else {
        Err(HarnessError::Config("verification failed".into()))
    }
}
