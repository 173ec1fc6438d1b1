//! Experiment specification and execution.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use desingopt::baselines::{FixedRankPoint, LrPoint};
use desingopt::cost::{CompletionProblem, SvSpec};
use desingopt::manifold::{self, ManifoldDims, ManifoldPoint, MetricParam};
use desingopt::solver::{
    gradient_descent, trust_region, DesingGeometry, FixedRankGeometry, LrGeometry, SolverConfig,
    SolverTrace,
};

use crate::{HarnessError, Result};

/// Salt mixed into the problem seed to derive the shared initial point.
const INIT_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryChoice {
    Desing,
    Lr,
    FixedRank,
}

impl GeometryChoice {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "desing" => Ok(Self::Desing),
            "lr" => Ok(Self::Lr),
            "fixed-rank" | "fixed_rank" => Ok(Self::FixedRank),
            other => Err(HarnessError::Config(format!("unknown geometry '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    TrustRegion,
    GradientDescent,
}

/// Full description of an experiment batch: one generated problem, one
/// shared initial point, one run per requested geometry (and per metric
/// parameter for the desingularization).
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSpec {
    pub m: usize,
    pub n: usize,
    pub r_star: usize,
    pub r: usize,
    pub oversampling: f64,
    pub sv_spec: SvSpec,
    pub seed: u64,
    pub alphas: Vec<f64>,
    pub geometries: Vec<GeometryChoice>,
    pub algorithm: Algorithm,
    pub solver: SolverConfig,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    /// Baseline spec used by the presets: desk-scale problems, all three
    /// geometries, the standard metric parameters `1/20, 1/2, 5`.
    pub fn base(out_dir: PathBuf) -> Self {
        Self {
            m: 300,
            n: 300,
            r_star: 5,
            r: 10,
            oversampling: 5.0,
            sv_spec: SvSpec::Uniform { lo: 0.5, hi: 1.0 },
            seed: 0,
            alphas: vec![0.05, 0.5, 5.0],
            geometries: vec![GeometryChoice::Desing, GeometryChoice::Lr, GeometryChoice::FixedRank],
            algorithm: Algorithm::TrustRegion,
            solver: SolverConfig { max_outer_iters: 200, grad_tol: 1e-9, ..Default::default() },
            out_dir,
        }
    }

    /// Named presets. `overestimate` uses a rank bound twice the target
    /// rank with well-conditioned singular values; `expdecay-exact` matches
    /// the target rank under exponentially decaying spectra; `expdecay-over`
    /// overestimates it under the same spectra.
    pub fn preset(name: &str, out_dir: PathBuf) -> Result<Self> {
        let mut spec = Self::base(out_dir);
        match name {
            "overestimate" => {
                spec.r_star = 5;
                spec.r = 10;
                spec.sv_spec = SvSpec::Uniform { lo: 0.5, hi: 1.0 };
            }
            "expdecay-exact" => {
                spec.r_star = 10;
                spec.r = 10;
                spec.sv_spec = SvSpec::ExpDecay { rho: 0.9 };
            }
            "expdecay-over" => {
                spec.r_star = 10;
                spec.r = 20;
                spec.sv_spec = SvSpec::ExpDecay { rho: 0.9 };
            }
            other => {
                return Err(HarnessError::Config(format!("unknown preset '{other}'")));
            }
        }
        Ok(spec)
    }

    pub fn dims(&self) -> Result<ManifoldDims> {
        Ok(ManifoldDims::new(self.m, self.n, self.r)?)
    }

    /// The labelled runs this spec expands to.
    pub fn runs(&self) -> Vec<RunLabel> {
        let mut runs = Vec::new();
        for &geometry in &self.geometries {
            match geometry {
                GeometryChoice::Desing => {
                    for &alpha in &self.alphas {
                        runs.push(RunLabel { geometry, alpha: Some(alpha) });
                    }
                }
                GeometryChoice::Lr | GeometryChoice::FixedRank => {
                    runs.push(RunLabel { geometry, alpha: None });
                }
            }
        }
        runs
    }
}

/// A single run within a batch.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RunLabel {
    pub geometry: GeometryChoice,
    pub alpha: Option<f64>,
}

impl RunLabel {
    pub fn name(&self) -> String {
        match (self.geometry, self.alpha) {
            (GeometryChoice::Desing, Some(alpha)) => format!("desing-alpha-{alpha}"),
            (GeometryChoice::Desing, None) => "desing".to_string(),
            (GeometryChoice::Lr, _) => "lr".to_string(),
            (GeometryChoice::FixedRank, _) => "fixed-rank".to_string(),
        }
    }
}

/// Outcome of one run: file paths, a summary, and the full trace.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub label: String,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub trace: SolverTrace,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    spec: &'a ExperimentSpec,
    run: RunRecord,
    build: BuildInfo,
}

#[derive(Serialize)]
struct RunRecord {
    label: String,
    geometry: GeometryChoice,
    alpha: Option<f64>,
    termination: String,
    outer_iters: usize,
    accepted_iters: usize,
    retraction_fallbacks: usize,
    final_cost: f64,
    final_grad_norm: f64,
    wall_time_s: f64,
}

#[derive(Serialize)]
struct BuildInfo {
    package: &'static str,
    version: &'static str,
}

/// Runs every (geometry, alpha) combination of the spec on the same problem
/// and initial point, in a parallel worker pool (one worker per run; runs are
/// independent and single-threaded). Returns one summary per run, in the
/// order of [`ExperimentSpec::runs`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunSummary>> {
    let problem = CompletionProblem::generate(
        spec.m,
        spec.n,
        spec.r_star,
        spec.r,
        spec.oversampling,
        spec.sv_spec,
        spec.seed,
    )?;
    let dims = spec.dims()?;
    let x0 = manifold::random_point_in(dims, (0.0, 1e-3), spec.seed ^ INIT_SEED_SALT);
    std::fs::create_dir_all(&spec.out_dir)?;

    let labels = spec.runs();
    let mut results: Vec<Option<Result<RunSummary>>> = Vec::new();
    for _ in &labels {
        results.push(None);
    }
    std::thread::scope(|scope| {
        let problem = &problem;
        let x0 = &x0;
        let mut handles = Vec::new();
        for (idx, label) in labels.iter().enumerate() {
            let label = *label;
            handles.push((idx, scope.spawn(move || execute_run(spec, problem, x0, label))));
        }
        for (idx, handle) in handles {
            results[idx] = Some(handle.join().expect("run worker panicked"));
        }
    });
    results.into_iter().map(|r| r.expect("all runs recorded")).collect()
}

fn execute_run(
    spec: &ExperimentSpec,
    problem: &CompletionProblem,
    x0: &ManifoldPoint,
    label: RunLabel,
) -> Result<RunSummary> {
    let started = Instant::now();
    let trace = match label.geometry {
        GeometryChoice::Desing => {
            let metric = MetricParam::new(label.alpha.unwrap_or(0.5))?;
            let geom = DesingGeometry::new(problem, metric, spec.solver.retraction);
            solve(&geom, x0.clone(), spec)
        }
        GeometryChoice::Lr => {
            let geom = LrGeometry { cost: problem };
            solve(&geom, LrPoint::balanced_from_point(x0), spec)
        }
        GeometryChoice::FixedRank => {
            let geom = FixedRankGeometry { cost: problem };
            solve(&geom, FixedRankPoint::from_manifold_point(x0)?, spec)
        }
    };
    let wall_time_s = started.elapsed().as_secs_f64();

    let name = label.name();
    let csv_path = spec.out_dir.join(format!("{name}.csv"));
    let json_path = spec.out_dir.join(format!("{name}.json"));
    write_atomic(&csv_path, &trace_to_csv(&trace))?;

    let record = RunRecord {
        label: name.clone(),
        geometry: label.geometry,
        alpha: label.alpha,
        termination: format!("{:?}", trace.termination),
        outer_iters: trace.outer_iters,
        accepted_iters: trace.accepted_iters(),
        retraction_fallbacks: trace.retraction_fallbacks(),
        final_cost: trace.final_cost(),
        final_grad_norm: trace.final_grad_norm(),
        wall_time_s,
    };
    let sidecar = Sidecar {
        spec,
        run: record,
        build: BuildInfo { package: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") },
    };
    write_atomic(&json_path, &serde_json::to_string_pretty(&sidecar)?)?;

    Ok(RunSummary { label: name, csv_path, json_path, trace, wall_time_s })
}

fn solve<G: desingopt::Geometry>(geom: &G, start: G::Point, spec: &ExperimentSpec) -> SolverTrace {
    match spec.algorithm {
        Algorithm::TrustRegion => trust_region(geom, &start, &spec.solver).1,
        Algorithm::GradientDescent => gradient_descent(geom, &start, &spec.solver).1,
    }
}

/// CSV schema: `iter,cost,grad_norm,time_s`, floats in lowercase scientific
/// notation; row 0 is the initial point, one row per accepted iteration.
pub fn trace_to_csv(trace: &SolverTrace) -> String {
    let mut out = String::from("iter,cost,grad_norm,time_s\n");
    for row in &trace.rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            row.iter, row.cost, row.grad_norm, row.wall_time_s
        ));
    }
    out
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Number of accepted iterations needed to reach `cost <= threshold`, if the
/// trace ever does.
pub fn iters_to_cost(trace: &SolverTrace, threshold: f64) -> Option<usize> {
    trace.rows.iter().find(|row| row.cost <= threshold).map(|row| row.iter)
}
