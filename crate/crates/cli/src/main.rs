//! Command-line driver: generate synthetic data, fit estimators, score
//! estimates, run sweeps, and render plots.
//!
//! Exit codes: 0 on success, 2 on usage errors (bad flags or flag values),
//! 1 on runtime errors (unreadable files, malformed data, numerical failures).
//! Diagnostics go to stderr; evaluation results go to stdout; everything else
//! goes to files.

use clap::{Args, Parser, Subcommand, ValueEnum};
use lowrank_mmnl::dataset::ChoiceDataset;
use lowrank_mmnl::fgd;
use lowrank_mmnl::harness::{
    lambda_practical, lambda_theorem, sweep_with, theorem_bound, BoundInputs, SweepConfig,
};
use lowrank_mmnl::mle::{fit_mle, RowFitOptions};
use lowrank_mmnl::param::{rmse, ParamMatrix};
use lowrank_mmnl::plot::{emit_plot, PlotAxis, PlotSpec};
use lowrank_mmnl::synthetic::{generate_truth, sample_dataset, seeded_rng, GeneratorConfig};
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mmnl",
    version,
    about = "Low-rank preference matrix estimation from assortment choice data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic truth matrix and choice dataset.
    Generate(GenerateArgs),
    /// Fit an estimator to a dataset and write the estimate.
    Fit(FitArgs),
    /// Score an estimate against a truth matrix.
    Evaluate(EvaluateArgs),
    /// Run a grid of experiments from a config file, writing CSV results.
    Sweep(SweepArgs),
    /// Render sweep results as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Consumer types (rows).
    #[arg(long)]
    m: usize,
    /// Items (columns).
    #[arg(long)]
    n: usize,
    /// Rank of the generated truth.
    #[arg(long)]
    rank: usize,
    /// Observation count.
    #[arg(long = "T")]
    t: usize,
    /// Assortment size.
    #[arg(long = "K")]
    k: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out_data: PathBuf,
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FitMethod {
    Fgd,
    Mle,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LambdaRuleArg {
    Theorem,
    Practical,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    method: FitMethod,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Fixed regularization weight (fgd).
    #[arg(long, conflicts_with = "lambda_rule")]
    lambda: Option<f64>,
    /// Data-derived regularization schedule (fgd); default practical.
    #[arg(long, value_enum)]
    lambda_rule: Option<LambdaRuleArg>,
    /// Suspected truth rank (fgd); factor rank defaults to twice this.
    #[arg(long)]
    rank: Option<usize>,
    /// Factor rank override (fgd).
    #[arg(long)]
    rank_tilde: Option<usize>,
    /// Line-search shrink factor (fgd).
    #[arg(long, default_value_t = 0.8)]
    beta_dec: f64,
    /// Relative objective-decrease stopping tolerance (fgd).
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Iteration cap: outer steps for fgd, Newton steps per row for mle.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Gradient-norm stopping tolerance (mle).
    #[arg(long, default_value_t = 1e-8)]
    grad_tol: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    estimate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Also compute the a-priori error bound (needs --K, --T, --rank).
    #[arg(long, requires_all = ["k", "t", "rank"])]
    bound: bool,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    rank: Option<usize>,
    /// Single-line key=value output.
    #[arg(long)]
    porcelain: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum PlotAxisArg {
    Size,
    #[value(name = "per-row")]
    PerRow,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, value_enum)]
    x: PlotAxisArg,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    /// Bad flag values or combinations: exit 2.
    Usage(String),
    /// Everything that fails after the flags were accepted: exit 1.
    Runtime(lowrank_mmnl::Error),
}

impl From<lowrank_mmnl::Error> for CliError {
    fn from(e: lowrank_mmnl::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let config = GeneratorConfig {
        m: args.m,
        n: args.n,
        r: args.rank,
        t: args.t,
        k: args.k,
        seed: args.seed,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let mut rng = seeded_rng(config.seed);
    let truth = generate_truth(&config, &mut rng)?;
    let data = sample_dataset(&truth, &config, &mut rng)?;
    truth.write_file(&args.out_truth)?;
    data.write_file(&args.out_data)?;
    eprintln!(
        "generated m={} n={} rank={} T={} K={} seed={} -> {}, {}",
        config.m,
        config.n,
        config.r,
        config.t,
        config.k,
        config.seed,
        args.out_data.display(),
        args.out_truth.display()
    );
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    match args.method {
        FitMethod::Fgd => fit_fgd(args),
        FitMethod::Mle => fit_mle_cmd(args),
    }
}

fn fit_fgd(args: FitArgs) -> Result<(), CliError> {
    let r_tilde_plan = match (args.rank_tilde, args.rank) {
        (Some(rt), _) => rt,
        (None, Some(r)) => 2 * r,
        (None, None) => {
            return Err(usage(
                "fgd needs a factor rank: pass --rank R (uses 2R) or --rank-tilde",
            ))
        }
    };
    if r_tilde_plan == 0 {
        return Err(usage("factor rank must be positive"));
    }
    let data = ChoiceDataset::read_file(&args.data)?;
    let r_tilde = r_tilde_plan.min(data.m().min(data.n()));
    let lambda = match (args.lambda, args.lambda_rule) {
        (Some(v), _) => {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(usage("--lambda must be finite and nonnegative"));
            }
            v
        }
        (None, rule) => {
            // data-derived schedule; K is the largest observed assortment
            let k = data.max_assortment_size();
            if k == 0 {
                return Err(CliError::Runtime(lowrank_mmnl::Error::InvalidInput(
                    "dataset has no observations".into(),
                )));
            }
            match rule.unwrap_or(LambdaRuleArg::Practical) {
                LambdaRuleArg::Theorem => lambda_theorem(data.m(), data.n(), data.len(), k)?,
                LambdaRuleArg::Practical => lambda_practical(data.m(), data.n(), data.len(), k)?,
            }
        }
    };
    let config = fgd::SolverConfig {
        lambda,
        r_tilde,
        beta_dec: args.beta_dec,
        tau: args.tol,
        max_outer_iters: args.max_iters.unwrap_or(10_000),
        max_linesearch_iters: 100,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let result = fgd::fit(&data, &config)?;
    result.estimate.write_file(&args.out)?;
    eprintln!(
        "fgd: lambda={lambda:.6e} r_tilde={r_tilde} objective={:.12e} iters={} wall={:.2}s converged={} -> {}",
        result.objective_trace.last().copied().unwrap_or(f64::NAN),
        result.outer_iters,
        result.wall_time_seconds,
        result.converged,
        args.out.display()
    );
    Ok(())
}

fn fit_mle_cmd(args: FitArgs) -> Result<(), CliError> {
    for (flag, set) in [
        ("--lambda", args.lambda.is_some()),
        ("--lambda-rule", args.lambda_rule.is_some()),
        ("--rank", args.rank.is_some()),
        ("--rank-tilde", args.rank_tilde.is_some()),
    ] {
        if set {
            return Err(usage(format!("{flag} does not apply to --method mle")));
        }
    }
    let options = RowFitOptions {
        grad_tol: args.grad_tol,
        max_iters: args.max_iters.unwrap_or(100),
        ..Default::default()
    };
    options.validate().map_err(|e| usage(e.to_string()))?;
    let start = std::time::Instant::now();
    let data = ChoiceDataset::read_file(&args.data)?;
    let fit = fit_mle(&data, &options)?;
    fit.estimate.write_file(&args.out)?;
    let converged_rows = fit.reports.iter().filter(|r| r.converged).count();
    let max_grad = fit
        .reports
        .iter()
        .map(|r| r.grad_norm)
        .fold(0.0_f64, f64::max);
    eprintln!(
        "mle: rows_converged={converged_rows}/{} iters={} max_grad_norm={max_grad:.3e} wall={:.2}s -> {}",
        data.m(),
        fit.total_iterations(),
        start.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let estimate = ParamMatrix::read_file(&args.estimate)?;
    let truth = ParamMatrix::read_file(&args.truth)?;
    let rmse_value = rmse(estimate.values(), truth.values())?;
    let frob_error = (estimate.values() - truth.values()).norm();
    let mut fields = vec![
        ("rmse", format!("{rmse_value:.16e}")),
        ("frob_error", format!("{frob_error:.16e}")),
    ];
    if args.bound {
        // clap guarantees the three flags are present alongside --bound
        let (k, t, r) = (args.k.unwrap(), args.t.unwrap(), args.rank.unwrap());
        let inputs = BoundInputs::from_truth(&truth, r, t, k)?;
        let bound = theorem_bound(&inputs)?;
        fields.push(("alpha", format!("{:.16e}", inputs.alpha)));
        fields.push(("sigma_tail", format!("{:.16e}", inputs.sigma_tail)));
        fields.push(("theorem_bound", format!("{bound:.16e}")));
        fields.push(("within_bound", (frob_error <= bound).to_string()));
    }
    if args.porcelain {
        let line: Vec<String> = fields
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!("{}", line.join(" "));
    } else {
        for (k, v) in &fields {
            println!("{k} = {v}");
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Runtime(lowrank_mmnl::Error::Io(e)))?;
    let config = SweepConfig::from_toml(&text).map_err(|e| usage(e.to_string()))?;
    let total: usize = config
        .experiments()
        .map_err(|e| usage(e.to_string()))?
        .iter()
        .map(|e| e.replications * e.methods.len())
        .sum();
    let mut done = 0usize;
    sweep_with(&config, &args.out, |record| {
        done += 1;
        eprintln!(
            "[{done}/{total}] m={} n={} r={} T={} K={} method={} seed={} rmse={:.4} converged={}",
            record.m,
            record.n,
            record.r,
            record.t,
            record.k,
            record.method,
            record.seed,
            record.rmse,
            record.converged
        );
        Ok(())
    })?;
    eprintln!("wrote {} records -> {}", done, args.out.display());
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), CliError> {
    let csv = std::fs::read_to_string(&args.results)
        .map_err(|e| CliError::Runtime(lowrank_mmnl::Error::Io(e)))?;
    let axis = match args.x {
        PlotAxisArg::Size => PlotAxis::Size,
        PlotAxisArg::PerRow => PlotAxis::PerRow,
    };
    let svg = emit_plot(&csv, &PlotSpec { axis })?;
    std::fs::write(&args.out, &svg).map_err(|e| CliError::Runtime(lowrank_mmnl::Error::Io(e)))?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}
