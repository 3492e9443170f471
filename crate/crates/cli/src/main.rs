//! `coulomb-rg`: runs the pipelines, writes CSV artifacts and a report, and
//! exits 0 only when every check passes.

mod config;
mod pipelines;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, OracleParams, Tolerances};
use report::{Check, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "coulomb-rg", version, about = "Renormalization group for the 2D Coulomb gas at the KT line")]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// cap on parallel width (1 = sequential)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// seed for sampled checks
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Finite-range decomposition of the lattice Green function
    Decompose(DecomposeArgs),
    /// Second-order coefficients a_j, b_j, e_j per scale
    Coeffs(CoeffArgs),
    /// One trajectory of the (x, y) flow
    Flow(FlowArgs),
    /// Stable manifold: fixed point against shooting, contraction
    Separatrix(SeparatrixArgs),
    /// Polymer counts, closure sums, extraction identities, regulators
    Polymers(PolymerArgs),
    /// Exact grand partition function on a small torus
    Oracle(OracleArgs),
    /// Every pipeline at its defaults
    All,
    /// Every pipeline at its defaults, with a JSON report
    Verify,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long = "L")]
    l: Option<u32>,
    #[arg(long = "R")]
    r: Option<u32>,
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long)]
    mass: Option<f64>,
    /// box, sine or hann
    #[arg(long)]
    taper: Option<String>,
    #[arg(long)]
    write_stack: bool,
}

#[derive(Debug, Args)]
struct CoeffArgs {
    #[arg(long = "L")]
    l: Option<u32>,
    #[arg(long = "R")]
    r: Option<u32>,
    #[arg(long)]
    gamma: Option<u32>,
    #[arg(long)]
    taper: Option<String>,
    #[arg(long)]
    alpha_sq: Option<f64>,
}

#[derive(Debug, Args)]
struct FlowArgs {
    #[arg(long = "L")]
    l: Option<u32>,
    #[arg(long = "R")]
    r: Option<u32>,
    /// starting x; the stable-manifold value when omitted
    #[arg(long, allow_negative_numbers = true)]
    x1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    y1: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// limit or per-scale
    #[arg(long)]
    mode: Option<String>,
    /// add the M̃ surrogate for the irrelevant remainder
    #[arg(long)]
    surrogate: bool,
}

#[derive(Debug, Args)]
struct SeparatrixArgs {
    #[arg(long = "L")]
    l: Option<u32>,
    #[arg(long = "R")]
    r: Option<u32>,
    /// repeatable
    #[arg(long, allow_negative_numbers = true)]
    y1: Vec<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Debug, Args)]
struct PolymerArgs {
    #[arg(long = "L")]
    l: Option<u32>,
    #[arg(long = "R")]
    r: Option<u32>,
    #[arg(long)]
    j: Option<usize>,
    #[arg(long)]
    max_blocks: Option<usize>,
    #[arg(long)]
    fields: Option<usize>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    side: Option<u32>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    z: Option<f64>,
    #[arg(long)]
    nmax: Option<usize>,
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

/// Fully resolved work for one invocation.
enum Plan {
    Decompose(config::DecomposeParams),
    Coeffs(config::CoeffParams),
    Flow(config::FlowParams),
    Separatrix(config::SeparatrixParams),
    Polymers(config::PolymerParams),
    Oracle(OracleParams),
}

impl Plan {
    fn run(&self, tol: &Tolerances, seed: u64, out: &Path) -> CliResult<Vec<Check>> {
        match self {
            Plan::Decompose(p) => pipelines::decompose(p, tol, out),
            Plan::Coeffs(p) => pipelines::coeffs(p, out),
            Plan::Flow(p) => pipelines::flow(p, tol, out),
            Plan::Separatrix(p) => pipelines::separatrix(p, tol, seed, out),
            Plan::Polymers(p) => pipelines::polymers(p, seed, out),
            Plan::Oracle(p) => pipelines::oracle(p, tol, out),
        }
    }
}

fn everything(cfg: &FileConfig) -> CliResult<Vec<Plan>> {
    Ok(vec![
        Plan::Decompose(cfg.decompose.resolve()?),
        Plan::Coeffs(cfg.coeffs.resolve()?),
        Plan::Flow(cfg.flow.resolve(false)?),
        Plan::Separatrix(cfg.separatrix.resolve(false)?),
        Plan::Polymers(cfg.polymers.resolve()?),
        Plan::Oracle(cfg.oracle.resolve(false)?),
    ])
}

/// Merges the flags into the file configuration and validates everything
/// before any output exists.
fn plan(cli: &Cli) -> CliResult<(Vec<Plan>, Tolerances, u64, Option<usize>)> {
    let mut cfg = match &cli.config {
        Some(path) => config::load(path)?,
        None => FileConfig::default(),
    };
    let plans = match &cli.command {
        Command::Decompose(a) => {
            let s = &mut cfg.decompose;
            set(&mut s.l, a.l);
            set(&mut s.r, a.r);
            set(&mut s.gamma, a.gamma);
            set(&mut s.mass, a.mass);
            set(&mut s.taper, a.taper.clone());
            if a.write_stack {
                s.write_stack = Some(true);
            }
            vec![Plan::Decompose(s.resolve()?)]
        }
        Command::Coeffs(a) => {
            let s = &mut cfg.coeffs;
            set(&mut s.l, a.l);
            set(&mut s.r, a.r);
            set(&mut s.gamma, a.gamma);
            set(&mut s.taper, a.taper.clone());
            set(&mut s.alpha_sq, a.alpha_sq);
            vec![Plan::Coeffs(s.resolve()?)]
        }
        Command::Flow(a) => {
            let s = &mut cfg.flow;
            set(&mut s.l, a.l);
            set(&mut s.r, a.r);
            set(&mut s.x1, a.x1);
            set(&mut s.y1, a.y1);
            set(&mut s.horizon, a.horizon);
            set(&mut s.mode, a.mode.clone());
            if a.surrogate {
                s.surrogate = Some(true);
            }
            vec![Plan::Flow(s.resolve(true)?)]
        }
        Command::Separatrix(a) => {
            let s = &mut cfg.separatrix;
            set(&mut s.l, a.l);
            set(&mut s.r, a.r);
            if !a.y1.is_empty() {
                s.y1 = Some(a.y1.clone());
            }
            set(&mut s.horizon, a.horizon);
            set(&mut s.pairs, a.pairs);
            set(&mut s.mode, a.mode.clone());
            set(&mut s.tau, a.tau);
            vec![Plan::Separatrix(s.resolve(true)?)]
        }
        Command::Polymers(a) => {
            let s = &mut cfg.polymers;
            set(&mut s.l, a.l);
            set(&mut s.r, a.r);
            set(&mut s.j, a.j);
            set(&mut s.max_blocks, a.max_blocks);
            set(&mut s.fields, a.fields);
            vec![Plan::Polymers(s.resolve()?)]
        }
        Command::Oracle(a) => {
            let s = &mut cfg.oracle;
            set(&mut s.side, a.side);
            set(&mut s.beta, a.beta);
            set(&mut s.z, a.z);
            set(&mut s.nmax, a.nmax);
            vec![Plan::Oracle(s.resolve(true)?)]
        }
        Command::All | Command::Verify => everything(&cfg)?,
    };
    let tol = cfg.checks.resolve()?;
    let workers = cli.workers.or(cfg.workers);
    if workers == Some(0) {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok((plans, tol, cli.seed.or(cfg.seed).unwrap_or(1), workers))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Decompose(_) => "decompose",
        Command::Coeffs(_) => "coeffs",
        Command::Flow(_) => "flow",
        Command::Separatrix(_) => "separatrix",
        Command::Polymers(_) => "polymers",
        Command::Oracle(_) => "oracle",
        Command::All => "all",
        Command::Verify => "verify",
    }
}

fn execute(cli: &Cli) -> CliResult<Report> {
    let (plans, tol, seed, workers) = plan(cli)?;
    let start = Instant::now();
    let run = || -> CliResult<Vec<Check>> {
        let mut checks = Vec::new();
        for p in &plans {
            checks.extend(p.run(&tol, seed, &cli.out_dir)?);
        }
        Ok(checks)
    };
    let checks = match workers {
        Some(w) => coulomb_rg::par::with_workers(w, run)?,
        None => run()?,
    };
    let mut report = Report::new(command_name(&cli.command), checks);
    // the file stays free of wall-clock content
    std::fs::write(cli.out_dir.join("report.json"), report::to_json(&report))?;
    report.runtime_seconds = Some(start.elapsed().as_secs_f64());
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("coulomb-rg: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("coulomb-rg: {e}");
            return ExitCode::from(1);
        }
    };
    if matches!(cli.command, Command::Verify) {
        print!("{}", report::to_json(&report));
    } else {
        report::print_table(&report.checks);
        println!("runtime {:.2} s", report.runtime_seconds.unwrap_or(0.0));
    }
    let failing = report.failing();
    if failing.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("coulomb-rg: failed checks: {}", failing.join(", "));
        ExitCode::from(1)
    }
}
