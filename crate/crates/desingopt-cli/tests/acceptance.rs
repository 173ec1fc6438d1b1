//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line with its measured quantities (run with `-- --nocapture`
//! to see them). The criteria serialize on a shared lock: several measure
//! wall time and must not contend for cores with the others.

use std::sync::Mutex;
use std::time::Instant;

use desingopt::baselines::{
    fixedrank_gradient, fixedrank_inner, fixedrank_project_dense, fixedrank_retract,
    FixedRankPoint, LrPoint, LrTangent,
};
use desingopt::calculus::{self, FactoredMatrix, PowerIterParams};
use desingopt::checks;
use desingopt::cost::{CompletionProblem, QuadraticCost, SvSpec};
use desingopt::manifold::{self, ManifoldDims, MetricParam};
use desingopt::retraction::{
    ambient_step_distance, intrinsic_acceleration_residual, retract_metric_projection,
    retract_polar, retract_qfactor, RetractionKind,
};
use desingopt::solver::{trust_region, DesingGeometry, LrGeometry, SolverConfig};
use desingopt::{CostModel, DenseCost};
use desingopt_cli::experiment::{iters_to_cost, run_experiment, ExperimentSpec};

static HEAVY: Mutex<()> = Mutex::new(());

fn heavy_lock() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn metric(alpha: f64) -> MetricParam {
    MetricParam::new(alpha).unwrap()
}

fn completion(m: usize, n: usize, r_star: usize, r: usize, seed: u64) -> CompletionProblem {
    CompletionProblem::generate(m, n, r_star, r, 5.0, SvSpec::Uniform { lo: 0.5, hi: 1.0 }, seed)
        .unwrap()
}

#[test]
fn c01_gradient_correctness() {
    let _guard = heavy_lock();
    let started = Instant::now();
    let dims = ManifoldDims::new(50, 50, 5).unwrap();
    let met = metric(0.5);
    let problem = completion(50, 50, 5, 5, 1);
    let quad = QuadraticCost::new(manifold::random_point_in(dims, (0.5, 1.5), 2).to_dense().0);

    let mut worst = 0.0f64;
    for point_seed in 0..20 {
        let pt = manifold::random_point_in(dims, (0.0, 1.0), 100 + point_seed);
        for (cost, base) in [(&problem as &dyn CostModel, 1000u64), (&quad, 2000u64)] {
            let err =
                checks::gradient_fd_max_error(&pt, cost, met, 20, base + 20 * point_seed);
            worst = worst.max(err);
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    println!(
        "criterion 1 (gradient correctness): max FD relative error {worst:.3e} (<= 1e-5), \
         runtime {elapsed:.2}s (< 10s)"
    );
    assert!(worst <= 1e-5, "FD relative error {worst:.3e}");
    assert!(elapsed < 10.0, "runtime {elapsed:.2}s");
}

#[test]
fn c02_hessian_correctness() {
    let _guard = heavy_lock();
    let dims = ManifoldDims::new(50, 50, 5).unwrap();
    let met = metric(0.5);
    let problem = completion(50, 50, 5, 5, 3);
    let quad = QuadraticCost::new(manifold::random_point_in(dims, (0.5, 1.5), 4).to_dense().0);
    let pt = manifold::random_point_in(dims, (0.0, 1.0), 5);

    let sym = checks::hessian_self_adjointness(&pt, &problem, met, 50, 6)
        .max(checks::hessian_self_adjointness(&pt, &quad, met, 50, 7));
    let mut quadform = 0.0f64;
    for seed in 0..20 {
        let t = manifold::random_tangent(&pt, met, 300 + seed);
        quadform = quadform.max(checks::hessian_quadform_error(&pt, &t, &problem, met));
        quadform = quadform.max(checks::hessian_quadform_error(&pt, &t, &quad, met));
    }
    let mut slope_worst = f64::INFINITY;
    for seed in 0..5 {
        let t = manifold::random_tangent(&pt, met, 400 + seed).scaled(0.3);
        let slope = checks::second_order_taylor_slope(&pt, &t, &problem, met)
            .expect("usable Taylor grid");
        slope_worst = slope_worst.min(slope);
    }
    println!(
        "criterion 2 (Hessian correctness): self-adjointness {sym:.3e} (<= 1e-11), \
         quadratic-form {quadform:.3e} (<= 1e-11), Taylor slope {slope_worst:.3} (>= 2.9)"
    );
    assert!(sym <= 1e-11);
    assert!(quadform <= 1e-11);
    assert!(slope_worst >= 2.9);
}

#[test]
fn c03_retraction_order() {
    let _guard = heavy_lock();
    let dims = ManifoldDims::new(12, 11, 2).unwrap();
    let met = metric(0.5);
    let kinds =
        [RetractionKind::QFactor, RetractionKind::MetricProjection, RetractionKind::Polar];

    let mut zero_worst = 0.0f64;
    let mut slope_worst = f64::INFINITY;
    for seed in 0..5 {
        let pt = manifold::random_point_in(dims, (0.0, 1.5), seed);
        let t = manifold::random_tangent(&pt, met, 100 + seed);
        for kind in kinds {
            zero_worst = zero_worst.max(checks::retraction_zero_residual(&pt, &t, met, kind));
            let slope = checks::retraction_first_order_slope(&pt, &t, met, kind)
                .expect("usable slope grid");
            slope_worst = slope_worst.min(slope);
        }
    }

    let mut accel_worst = 0.0f64;
    for seed in 0..50 {
        let pt = manifold::random_point_in(dims, (0.2, 1.5), 200 + seed);
        let t = manifold::random_tangent(&pt, met, 300 + seed);
        let norm = desingopt::geometry::norm(&pt, &t, met);
        let bound = 1e-5 * (1.0 + norm * norm);
        for kind in [RetractionKind::MetricProjection, RetractionKind::Polar] {
            let res = intrinsic_acceleration_residual(&pt, &t, met, kind);
            accel_worst = accel_worst.max(res / bound);
        }
    }

    let mut distance_margin = f64::NEG_INFINITY;
    for seed in 0..50 {
        let pt = manifold::random_point_in(dims, (0.0, 1.5), 400 + seed);
        let t = manifold::random_tangent(&pt, met, 500 + seed)
            .scaled(if seed % 2 == 0 { 0.4 } else { 1.5 });
        let d_mp = ambient_step_distance(&pt, &t, &retract_metric_projection(&pt, &t, met).point, met);
        let d_qf = ambient_step_distance(&pt, &t, &retract_qfactor(&pt, &t), met);
        let d_po = ambient_step_distance(&pt, &t, &retract_polar(&pt, &t, met), met);
        distance_margin = distance_margin.max(d_mp - d_qf.min(d_po));
    }

    println!(
        "criterion 3 (retraction order): base-point residual {zero_worst:.3e} (<= 1e-12), \
         first-order slope {slope_worst:.3} (>= 1.9), acceleration ratio {accel_worst:.3e} (<= 1), \
         metric-projection excess distance {distance_margin:.3e} (<= 1e-12)"
    );
    assert!(zero_worst <= 1e-12);
    assert!(slope_worst >= 1.9);
    assert!(accel_worst <= 1.0);
    assert!(distance_margin <= 1e-12);
}

#[test]
fn c04_metric_projection_algebra() {
    let _guard = heavy_lock();
    let dims = ManifoldDims::new(12, 11, 3).unwrap();
    let mut inner_worst = 0.0f64;
    let mut idem_worst = 0.0f64;
    let mut pyth_worst = 0.0f64;
    let mut normal_worst = 0.0f64;
    for alpha in [0.05, 0.5, 5.0] {
        let met = metric(alpha);
        for seed in 0..10 {
            let pt = manifold::random_point_in(dims, (0.0, 1.5), seed);
            inner_worst = inner_worst.max(checks::inner_ambient_agreement(&pt, met, 100 + seed));
            idem_worst =
                idem_worst.max(checks::projection_idempotence_residual(&pt, met, 200 + seed));
            pyth_worst = pyth_worst.max(checks::pythagoras_residual(&pt, met, 300 + seed));
            normal_worst =
                normal_worst.max(checks::normal_projection_residual(&pt, met, 400 + seed));
        }
    }
    println!(
        "criterion 4 (metric/projection algebra): inner {inner_worst:.3e} (<= 1e-12), \
         idempotence {idem_worst:.3e} (<= 1e-12), Pythagoras {pyth_worst:.3e} (<= 1e-10), \
         normal projection {normal_worst:.3e} (<= 1e-12)"
    );
    assert!(inner_worst <= 1e-12);
    assert!(idem_worst <= 1e-12);
    assert!(pyth_worst <= 1e-10);
    assert!(normal_worst <= 1e-12);
}

#[test]
fn c05_norm_bounds() {
    let _guard = heavy_lock();
    // Gradient bound on every evaluated point, across costs and alphas.
    let dims = ManifoldDims::new(40, 40, 3).unwrap();
    let problem = completion(40, 40, 3, 3, 8);
    let quad = QuadraticCost::new(manifold::random_point_in(dims, (0.5, 1.5), 9).to_dense().0);
    let mut grad_ratio = 0.0f64;
    for alpha in [0.05, 0.5, 5.0] {
        let met = metric(alpha);
        for seed in 0..20 {
            let pt = manifold::random_point_in(dims, (0.0, 1.5), 30 + seed);
            for cost in [&problem as &dyn DenseCost, &quad] {
                let (lifted, dense) = checks::gradient_bound_values(&pt, cost, met);
                grad_ratio = grad_ratio.max(lifted / dense);
            }
        }
    }

    // Hessian operator norm vs the bound on 20 random instances.
    let met = metric(0.5);
    let mut hess_margin = f64::NEG_INFINITY;
    for seed in 0..20 {
        let problem = completion(40, 40, 3, 3, 100 + seed);
        let pt = manifold::random_point_in(dims, (0.0, 1.0), 200 + seed);
        let bound = calculus::hessian_norm_bound(&pt, &problem, met, PowerIterParams::default());
        let estimate = checks::hessian_op_norm_estimate(&pt, &problem, met, 60, 300 + seed);
        hess_margin = hess_margin.max(estimate - bound);
    }
    println!(
        "criterion 5 (norm bounds): max |grad g|/|grad f| {grad_ratio:.12} (<= 1), \
         max Hessian estimate minus bound {hess_margin:.3e} (<= 1e-8)"
    );
    assert!(grad_ratio <= 1.0 + 1e-12);
    assert!(hess_margin <= 1e-8);
}

#[test]
fn c06_desk_scale_convergence() {
    let _guard = heavy_lock();
    let started = Instant::now();
    let problem = completion(300, 300, 5, 10, 42);
    let dims = ManifoldDims::new(300, 300, 10).unwrap();
    let start = manifold::random_point_in(dims, (0.0, 1e-3), 43);
    let geom =
        DesingGeometry::new(&problem, metric(0.5), RetractionKind::MetricProjection);
    let config = SolverConfig { max_outer_iters: 100, grad_tol: 1e-6, ..Default::default() };
    let (_, trace) = trust_region(&geom, &start, &config);
    let elapsed = started.elapsed().as_secs_f64();

    for w in trace.rows.windows(2) {
        assert!(w[1].cost <= w[0].cost, "descent invariant violated");
    }
    println!(
        "criterion 6 (desk-scale convergence): cost {:.3e} (<= 1e-8), grad {:.3e} (<= 1e-6), \
         outer iters {} (<= 100), runtime {elapsed:.2}s (< 60s)",
        trace.final_cost(),
        trace.final_grad_norm(),
        trace.outer_iters,
    );
    assert!(trace.final_cost() <= 1e-8);
    assert!(trace.final_grad_norm() <= 1e-6);
    assert!(trace.outer_iters <= 100);
    assert!(elapsed < 60.0);
}

#[test]
fn c07_rank_overestimation_trend() {
    let _guard = heavy_lock();
    // Desk-scale expdecay-over setup: the lifted geometry must reach the
    // cost threshold in no more accepted iterations than the LR baseline,
    // from identical problems and initializations, over three seeds.
    let threshold = 1e-6;
    let config = SolverConfig { max_outer_iters: 150, grad_tol: 1e-7, ..Default::default() };
    for seed in [11u64, 12, 13] {
        let problem = CompletionProblem::generate(
            300,
            300,
            10,
            20,
            5.0,
            SvSpec::ExpDecay { rho: 0.9 },
            seed,
        )
        .unwrap();
        let dims = ManifoldDims::new(300, 300, 20).unwrap();
        let x0 = manifold::random_point_in(dims, (0.0, 1e-3), 1000 + seed);

        let geom = DesingGeometry::new(&problem, metric(0.5), RetractionKind::MetricProjection);
        let (_, desing_trace) = trust_region(&geom, &x0, &config);
        let desing_iters = iters_to_cost(&desing_trace, threshold)
            .unwrap_or_else(|| panic!("desingularization never reached {threshold:e} (seed {seed})"));

        let lr_geom = LrGeometry { cost: &problem };
        let (_, lr_trace) = trust_region(&lr_geom, &LrPoint::balanced_from_point(&x0), &config);
        let lr_iters = iters_to_cost(&lr_trace, threshold);

        println!(
            "criterion 7 (rank overestimation, seed {seed}): desing {desing_iters} accepted \
             iterations to {threshold:e}, lr {lr_iters:?}"
        );
        if let Some(lr_iters) = lr_iters {
            assert!(
                desing_iters <= lr_iters,
                "seed {seed}: desing {desing_iters} > lr {lr_iters}"
            );
        }
    }
}

#[test]
fn c08_complexity_scaling() {
    let _guard = heavy_lock();
    let r = 10;
    let met = metric(0.5);

    struct Instance {
        problem: CompletionProblem,
        pt: desingopt::ManifoldPoint,
        t: desingopt::TangentVector,
    }
    let instance = |size: usize| {
        let problem = completion(size, size, 5, r, 77);
        let dims = ManifoldDims::new(size, size, r).unwrap();
        let pt = manifold::random_point_in(dims, (0.0, 1e-3), 78);
        let t = manifold::random_tangent(&pt, met, 79);
        Instance { problem, pt, t }
    };
    let instances = [instance(2000), instance(4000)];

    // Measurements of the two sizes interleave within each repetition so
    // machine-load fluctuations hit both equally and cancel in the ratio.
    let reps = 15;
    let mut retraction_times = [Vec::new(), Vec::new()];
    let mut gradient_times = [Vec::new(), Vec::new()];
    for rep in 0..reps + 2 {
        for (idx, inst) in instances.iter().enumerate() {
            let t0 = Instant::now();
            let out = retract_metric_projection(&inst.pt, &inst.t, met);
            let dt_retract = t0.elapsed().as_secs_f64();
            std::hint::black_box(out.point.sigma()[0]);

            let t1 = Instant::now();
            let g = calculus::riemannian_gradient(&inst.pt, &inst.problem, met);
            let dt_grad = t1.elapsed().as_secs_f64();
            std::hint::black_box(g.k[(0, 0)]);

            if rep >= 2 {
                // First two repetitions are warmup.
                retraction_times[idx].push(dt_retract);
                gradient_times[idx].push(dt_grad);
            }
        }
    }
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let retraction_medians = [
        median(retraction_times[0].clone()),
        median(retraction_times[1].clone()),
    ];
    let gradient_medians =
        [median(gradient_times[0].clone()), median(gradient_times[1].clone())];
    let retraction_factor = retraction_medians[1] / retraction_medians[0];
    let gradient_factor = gradient_medians[1] / gradient_medians[0];
    println!(
        "criterion 8 (complexity scaling): 2000->4000 median factors: retraction {:.2}x, \
         gradient {:.2}x (< 3); medians retraction {:?}, gradient {:?}",
        retraction_factor, gradient_factor, retraction_medians, gradient_medians
    );
    assert!(retraction_factor < 3.0, "retraction factor {retraction_factor:.2}");
    assert!(gradient_factor < 3.0, "gradient factor {gradient_factor:.2}");
}

#[test]
fn c09_determinism() {
    let _guard = heavy_lock();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let make = |out: std::path::PathBuf| {
        let mut spec = ExperimentSpec::base(out);
        spec.m = 80;
        spec.n = 80;
        spec.r_star = 3;
        spec.r = 6;
        spec.seed = 21;
        spec.solver.max_outer_iters = 60;
        spec
    };
    let runs_a = run_experiment(&make(dir_a.path().to_path_buf())).unwrap();
    let runs_b = run_experiment(&make(dir_b.path().to_path_buf())).unwrap();
    assert_eq!(runs_a.len(), 5);
    for (a, b) in runs_a.iter().zip(&runs_b) {
        let csv_a = std::fs::read_to_string(&a.csv_path).unwrap();
        let csv_b = std::fs::read_to_string(&b.csv_path).unwrap();
        let strip = |csv: &str| -> Vec<String> {
            csv.lines().map(|l| l.split(',').take(3).collect::<Vec<_>>().join(",")).collect()
        };
        assert_eq!(strip(&csv_a), strip(&csv_b), "{} differs between reruns", a.label);
    }
    println!(
        "criterion 9 (determinism): {} runs byte-identical excluding time_s",
        runs_a.len()
    );
}

#[test]
fn c10_baseline_sanity() {
    let _guard = heavy_lock();
    let dims = ManifoldDims::new(30, 28, 3).unwrap();
    let problem = CompletionProblem::generate(
        30,
        28,
        3,
        3,
        3.0,
        SvSpec::Uniform { lo: 0.5, hi: 1.0 },
        51,
    )
    .unwrap();

    // FD gradient checks for both baselines.
    let mut lr_worst = 0.0f64;
    let mut fr_worst = 0.0f64;
    use rand::SeedableRng;
    use rand_distr::StandardNormal;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(52);
    let mut gaussian = |m: usize, n: usize| {
        nalgebra::DMatrix::from_fn(m, n, |_, _| rand::Rng::sample(&mut rng, StandardNormal))
    };
    for seed in 0..10 {
        let base = manifold::random_point_in(dims, (0.5, 1.5), 60 + seed);
        let lr = LrPoint::balanced_from_point(&base);
        let t = LrTangent { dl: gaussian(30, 3), dr: gaussian(28, 3) };
        let g = desingopt::baselines::lr_gradient(&problem, &lr);
        let ip = desingopt::baselines::lr_inner(&g, &t);
        let h = 1e-6;
        let eval = |s: f64| {
            let q = LrPoint { l: &lr.l + &t.dl * s, r: &lr.r + &t.dr * s };
            problem.value(&q.factored())
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        lr_worst = lr_worst.max(checks::rel_err(fd, ip));

        let fr = FixedRankPoint::from_manifold_point(&base).unwrap();
        let tf = fixedrank_project_dense(&fr, &gaussian(30, 28));
        let gf = fixedrank_gradient(&problem, &fr);
        let ipf = fixedrank_inner(&gf, &tf);
        let evalf = |s: f64| {
            let q = fixedrank_retract(&fr, &tf.scaled(s)).unwrap();
            problem.value(&q.factored())
        };
        let fdf = (evalf(h) - evalf(-h)) / (2.0 * h);
        fr_worst = fr_worst.max(checks::rel_err(fdf, ipf));
    }

    // All three parameterizations agree on the cost of the same matrix.
    let mut value_worst = 0.0f64;
    for seed in 0..10 {
        let pt = manifold::random_point_in(dims, (0.5, 1.5), 90 + seed);
        let desing_value = problem.value(&FactoredMatrix::from_point(&pt));
        let lr_value = problem.value(&LrPoint::balanced_from_point(&pt).factored());
        let fr_value =
            problem.value(&FixedRankPoint::from_manifold_point(&pt).unwrap().factored());
        value_worst = value_worst.max(checks::rel_err(desing_value, lr_value));
        value_worst = value_worst.max(checks::rel_err(desing_value, fr_value));
    }
    println!(
        "criterion 10 (baseline sanity): LR FD {lr_worst:.3e} (<= 1e-5), fixed-rank FD \
         {fr_worst:.3e} (<= 1e-5), cross-parameterization value agreement {value_worst:.3e} \
         (<= 1e-12)"
    );
    assert!(lr_worst <= 1e-5);
    assert!(fr_worst <= 1e-5);
    assert!(value_worst <= 1e-12);
}
