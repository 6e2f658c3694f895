//! `kmfg`: solve, sweep, verify, bifurcate and simulate from the command line.
//!
//! Exit codes: 0 success, 2 invalid flags, 3 solver failure, 4 failed
//! verification, 1 I/O errors.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kuramoto_mfg::bifurcation::{critical_coupling, BranchOutcome, BranchSolver};
use kuramoto_mfg::hjb::hjb_residual;
use kuramoto_mfg::report::{self, Table};
use kuramoto_mfg::sde::{simulate_stationary, SimConfig, MAX_DT};
use kuramoto_mfg::sensitivity::{derivative_sweep, variations};
use kuramoto_mfg::{make_grid, par, Error, Execution, HjbSolution, InequalityMargin, MarginReport, ModelParams, SolverOptions, TorusGrid};

use config::Defaults;

#[derive(Parser, Debug)]
#[command(name = "kmfg", version, about = "Stationary Kuramoto mean field game laboratory")]
struct Cli {
    /// TOML file overriding the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Grid size M (even).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// HJB residual target.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Run every work item on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the HJB equation and write the solution as JSON.
    Solve(SolveArgs),
    /// Derivative identities against finite differences along a zeta sweep.
    Sweep(SweepArgs),
    /// Shape and moment margins at one solution.
    Verify(VerifyArgs),
    /// Synchronized branch in physical parameters.
    Bifurcate(BifurcateArgs),
    /// Stationary histogram of the optimally controlled diffusion.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, allow_negative_numbers = true)]
    zeta: f64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, allow_negative_numbers = true)]
    zeta_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    All,
    Shape,
    Moment,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    zeta: Option<f64>,
    #[arg(long, value_enum)]
    suite: Option<Suite>,
    /// Verify a stored solution instead of solving.
    #[arg(long)]
    solution_in: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BifurcateArgs {
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    kappa_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    kappa_max: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Accept couplings at or below the threshold.
    #[arg(long)]
    allow_subcritical: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    #[arg(long, allow_negative_numbers = true)]
    zeta: f64,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    burn_in: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn verification(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParams(_)
            | Error::InvalidGrid(_)
            | Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::InvalidDensity(_)
            | Error::Json(_) => 2,
            Error::NonConvergence { .. }
            | Error::SingularSystem(_)
            | Error::BracketFailure { .. }
            | Error::DegenerateEndpoint(_)
            | Error::DegenerateIncrement(_)
            | Error::DegeneratePushforward(_) => 3,
            Error::Io(_) => 1,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self { code: 1, message: e.to_string() }
    }
}

type CliResult<T> = Result<T, Failure>;

struct Context {
    defaults: Defaults,
    grid: Arc<TorusGrid>,
    opts: SolverOptions,
    exec: Execution,
}

fn positive(flag: &str, x: f64) -> CliResult<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Failure::usage(format!("invalid value for --{flag}: {x} (must be positive)")))
    }
}

fn nonnegative(flag: &str, x: f64) -> CliResult<f64> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(Failure::usage(format!("invalid value for --{flag}: {x} (must be nonnegative)")))
    }
}

fn context(cli: &Cli) -> CliResult<Context> {
    let defaults = Defaults::load(cli.config.as_deref()).map_err(Failure::usage)?;
    let m = cli.grid.unwrap_or(defaults.solver.grid);
    let grid = make_grid(m).map_err(|e| Failure::usage(format!("invalid value for --grid: {e}")))?;
    let s = &defaults.solver;
    let opts = SolverOptions {
        tolerance: positive("tolerance", cli.tolerance.unwrap_or(s.tolerance))?,
        max_newton_iter: s.max_newton_iter,
        max_step: s.max_step,
        min_step: s.min_step,
        ..SolverOptions::default()
    };
    opts.validate()?;
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    Ok(Context { defaults, grid, opts, exec })
}

fn write_output(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn csv_text(table: &Table) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure { code: 1, message: e.to_string() };
    w.write_record(&table.header).map_err(io)?;
    for row in &table.rows {
        w.write_record(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure { code: 1, message: e.to_string() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Human-readable lines go to stderr when the report itself goes to stdout.
fn say(out: Option<&Path>, line: &str) {
    if out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn solve(ctx: &Context, lambda: f64, zeta: f64) -> CliResult<HjbSolution> {
    let params = ModelParams::new(positive("lambda", lambda)?, nonnegative("zeta", zeta)?)?;
    Ok(kuramoto_mfg::solve_hjb(params, &ctx.grid, &ctx.opts)?)
}

fn cmd_solve(ctx: &Context, a: &SolveArgs) -> CliResult<()> {
    let sol = solve(ctx, a.lambda, a.zeta)?;
    write_output(a.out.as_deref(), &(sol.to_json()? + "\n"))?;
    say(a.out.as_deref(), &format!("residual {:.3e}  A {:.16e}", sol.residual, sol.order_parameter));
    Ok(())
}

fn cmd_sweep(ctx: &Context, a: &SweepArgs) -> CliResult<()> {
    let lambda = positive("lambda", a.lambda)?;
    let zeta_max = positive("zeta-max", a.zeta_max.unwrap_or(ctx.defaults.sweep.zeta_max))?;
    let steps = a.steps.unwrap_or(ctx.defaults.sweep.steps);
    if steps < 2 {
        return Err(Failure::usage(format!("invalid value for --steps: {steps} (need at least 2)")));
    }
    let zetas: Vec<f64> = (1..=steps).map(|i| zeta_max * i as f64 / steps as f64).collect();
    let reports = derivative_sweep(lambda, &zetas, &ctx.grid, &ctx.opts, ctx.exec)?;
    write_output(a.out.as_deref(), &csv_text(&report::derivative_table(&reports))?)?;
    let min_neg = reports.iter().map(|r| -r.a2_identity).fold(f64::INFINITY, f64::min);
    say(a.out.as_deref(), &format!("rows {}  min -A2_identity {min_neg:.6e}", reports.len()));
    if min_neg > 0.0 {
        Ok(())
    } else {
        Err(Failure::verification(format!("A2_identity is not negative on the sweep (min -A2 = {min_neg:e})")))
    }
}

/// Integrity of the solution itself. Matters for `--solution-in`, cheap
/// enough to run always.
fn integrity_margins(ctx: &Context, sol: &HjbSolution) -> MarginReport {
    let mut r = MarginReport::default();
    let scale = sol.v.sup_norm().max(1.0);
    let vd = &ctx.defaults.verify;
    r.push(InequalityMargin::equality("v_parity", sol.v.even_defect() / scale, 0.0, vd.parity_tol));
    r.push(InequalityMargin::equality("hjb_residual", hjb_residual(sol), 0.0, vd.residual_tol));
    r
}

fn cmd_verify(ctx: &Context, a: &VerifyArgs) -> CliResult<()> {
    let suite = match (a.suite, ctx.defaults.verify.suite.as_str()) {
        (Some(s), _) => s,
        (None, "shape") => Suite::Shape,
        (None, "moment") => Suite::Moment,
        (None, _) => Suite::All,
    };
    let sol = match &a.solution_in {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            HjbSolution::from_json(&text).map_err(|e| Failure::usage(format!("--solution-in {}: {e}", path.display())))?
        }
        None => {
            let (Some(lambda), Some(zeta)) = (a.lambda, a.zeta) else {
                return Err(Failure::usage("verify needs --lambda and --zeta, or --solution-in"));
            };
            solve(ctx, lambda, zeta)?
        }
    };
    if sol.zeta().is_nan() || sol.zeta() <= 0.0 {
        return Err(Failure::usage("invalid value for --zeta: verification needs zeta > 0"));
    }
    let mut r = integrity_margins(ctx, &sol);
    // A solution that is not an even HJB solution makes the variation
    // systems meaningless, so the suites only run on intact input.
    if r.failures().is_empty() {
        let var = variations(&sol)?;
        if suite != Suite::Moment {
            r.extend(kuramoto_mfg::shape::verify_shape(&sol, &var)?);
        }
        if suite != Suite::Shape {
            r.extend(kuramoto_mfg::moments::verify_moments(&sol, &var)?);
        }
    }
    write_output(a.out.as_deref(), &(r.to_json()? + "\n"))?;
    let failures = r.failures();
    say(a.out.as_deref(), &format!("margins {}  failed {}", r.len(), failures.len()));
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::verification(format!("failed margins: {}", failures.join(", "))))
    }
}

fn cmd_bifurcate(ctx: &Context, a: &BifurcateArgs) -> CliResult<()> {
    let d = &ctx.defaults.bifurcate;
    let beta = positive("beta", a.beta.unwrap_or(d.beta))?;
    let sigma = positive("sigma", a.sigma.unwrap_or(d.sigma))?;
    let kmin = positive("kappa-min", a.kappa_min.unwrap_or(d.kappa_min))?;
    let kmax = positive("kappa-max", a.kappa_max.unwrap_or(d.kappa_max))?;
    let steps = a.steps.unwrap_or(d.steps);
    if steps == 0 {
        return Err(Failure::usage("invalid value for --steps: 0"));
    }
    if kmax < kmin || (steps > 1 && kmax == kmin) {
        return Err(Failure::usage(format!("invalid value for --kappa-max: {kmax} (below --kappa-min)")));
    }
    let kappa_c = critical_coupling(beta, sigma)?;
    if kmin <= kappa_c && !a.allow_subcritical {
        return Err(Failure::usage(format!(
            "invalid value for --kappa-min: {kmin} is not above kappa_c = {kappa_c} (pass --allow-subcritical)"
        )));
    }
    let kappas: Vec<f64> = if steps == 1 {
        vec![kmin]
    } else {
        (0..steps).map(|i| kmin + (kmax - kmin) * i as f64 / (steps - 1) as f64).collect()
    };
    let outcomes: Vec<BranchOutcome> = if kmax > kappa_c {
        let solver = BranchSolver::with_reach(beta, sigma, kmax, &ctx.grid, &ctx.opts)?;
        par::try_map_slice(ctx.exec, &kappas, |&k| solver.solve(k))?
    } else {
        kappas.iter().map(|&kappa| BranchOutcome::NoSynchronizedEquilibrium { kappa, kappa_c }).collect()
    };
    write_output(a.out.as_deref(), &csv_text(&report::branch_table(&outcomes))?)?;
    let synced = outcomes.iter().filter(|o| o.point().is_some()).count();
    say(a.out.as_deref(), &format!("kappa_c {kappa_c:.16e}  rows {}  synchronized {synced}", outcomes.len()));
    Ok(())
}

fn cmd_simulate(ctx: &Context, a: &SimulateArgs) -> CliResult<()> {
    let d = &ctx.defaults.simulate;
    let cfg = SimConfig {
        dt: a.dt.unwrap_or(d.dt),
        n_paths: a.paths.unwrap_or(d.paths),
        horizon: a.horizon.unwrap_or(d.horizon),
        burn_in: a.burn_in.unwrap_or(d.burn_in),
        seed: a.seed.unwrap_or(d.seed),
        bins: a.bins.unwrap_or(d.bins),
    };
    if !(cfg.dt > 0.0 && cfg.dt <= MAX_DT) {
        return Err(Failure::usage(format!("invalid value for --dt: {} (must lie in (0, {MAX_DT}])", cfg.dt)));
    }
    cfg.validate()?;
    let sol = solve(ctx, a.lambda, a.zeta)?;
    let law = simulate_stationary(&sol, &cfg)?;
    write_output(a.out.as_deref(), &csv_text(&report::histogram_table(&law))?)?;
    say(a.out.as_deref(), &format!("L1 {:.6e}  samples {}", law.l1_to_density, law.samples));
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Solve(a) => cmd_solve(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Verify(a) => cmd_verify(&ctx, a),
        Command::Bifurcate(a) => cmd_bifurcate(&ctx, a),
        Command::Simulate(a) => cmd_simulate(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kmfg: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
