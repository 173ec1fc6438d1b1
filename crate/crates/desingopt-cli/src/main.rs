use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use desingopt_cli::config::{self, Options};
use desingopt_cli::{experiment, verify};

/// Bounded-rank matrix optimization experiments.
#[derive(Parser)]
#[command(name = "desingopt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a completion problem and run the solver across geometries,
    /// writing one CSV trace and one JSON sidecar per run.
    Run(RunArgs),
    /// Run the property verification suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value config file; flags below override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset: overestimate | expdecay-exact | expdecay-over.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long = "r-star")]
    r_star: Option<usize>,
    /// Comma list of metric parameters for the desingularization runs.
    #[arg(long)]
    alpha: Option<String>,
    /// Comma list of geometries (desing, lr, fixed-rank) or 'all'.
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for trace files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    oversampling: Option<f64>,
    /// Singular-value spec: 'uniform:lo,hi' or 'expdecay:rho'.
    #[arg(long)]
    sv: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long = "grad-tol")]
    grad_tol: Option<f64>,
    /// Solver: tr (default) or gd.
    #[arg(long)]
    algorithm: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite: geometry | retractions | calculus | all (default).
    suite: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run_command(args: RunArgs) -> desingopt_cli::Result<()> {
    let file_opts = match &args.config {
        Some(path) => config::parse_config(&std::fs::read_to_string(path)?)?,
        None => Options::default(),
    };
    let flag_opts = Options {
        preset: args.preset,
        m: args.m,
        n: args.n,
        r: args.r,
        r_star: args.r_star,
        alpha: args.alpha.as_deref().map(config::parse_alpha_list).transpose()?,
        geometry: args.geometry.as_deref().map(config::parse_geometries).transpose()?,
        seed: args.seed,
        out: args.out,
        oversampling: args.oversampling,
        sv: args.sv.as_deref().map(config::parse_sv).transpose()?,
        max_iters: args.max_iters,
        grad_tol: args.grad_tol,
        algorithm: args.algorithm.as_deref().map(config::parse_algorithm).transpose()?,
    };
    let spec = flag_opts.over(file_opts).into_spec()?;

    eprintln!(
        "problem: {}x{} rank<= {} (target rank {}), oversampling {}, seed {}",
        spec.m, spec.n, spec.r, spec.r_star, spec.oversampling, spec.seed
    );
    let summaries = experiment::run_experiment(&spec)?;
    for s in &summaries {
        println!(
            "{:18} cost={:10.3e} grad={:10.3e} accepted={:4} outer={:4} time={:7.2}s ({:?}) -> {}",
            s.label,
            s.trace.final_cost(),
            s.trace.final_grad_norm(),
            s.trace.accepted_iters(),
            s.trace.outer_iters,
            s.wall_time_s,
            s.trace.termination,
            s.csv_path.display(),
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run_command(args),
        Command::Verify(args) => {
            verify::run(args.suite.as_deref().unwrap_or("all"), args.seed)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
