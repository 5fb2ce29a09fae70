use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kkperturb::algebra::Subalgebra;
use kkperturb::checks::{self, CheckConfig};
use kkperturb::expectation::trace_expectation;
use kkperturb::format::read_subalgebra;
use kkperturb::harness::{run_suite, Scenario, Shape};
use kkperturb::perturbation::{conjugating_unitary, distance_interval, PipelineOptions};
use kkperturb::{Error, Result, ToleranceProfile};

#[derive(Parser)]
#[command(name = "kkperturb", version, about = "Conjugate nearby subalgebras of matrix algebras by unitaries close to the identity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials of random conjugation instances.
    Run(RunArgs),
    /// Run the acceptance suites.
    Check(CheckArgs),
    /// Bracket the distance between two subalgebras.
    Distance(DistanceArgs),
    /// Build a unitary u with u M u* = N.
    Conjugate(ConjugateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with Scenario fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    /// "masa" or "k1xm1,k2xm2,...": block M_k repeated m times.
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report file (summary plus per-trial records).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print only the summary.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// Reduced sample sizes.
    #[arg(long)]
    quick: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the verdicts as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TolArgs {
    #[arg(long)]
    rank_eps: Option<f64>,
    #[arg(long)]
    eq_eps: Option<f64>,
    #[arg(long)]
    psd_eps: Option<f64>,
}

impl TolArgs {
    fn profile(&self) -> Result<ToleranceProfile> {
        let d = ToleranceProfile::default();
        ToleranceProfile::new(
            self.rank_eps.unwrap_or(d.rank_eps),
            self.eq_eps.unwrap_or(d.eq_eps),
            self.psd_eps.unwrap_or(d.psd_eps),
        )
    }
}

#[derive(Args)]
struct DistanceArgs {
    /// Subalgebra file for N.
    n: PathBuf,
    /// Subalgebra file for M.
    m: PathBuf,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Known bound 2 ||v - I|| for some unitary v with M = v N v*.
    #[arg(long)]
    certificate: Option<f64>,
    #[command(flatten)]
    tol: TolArgs,
}

#[derive(Args)]
struct ConjugateArgs {
    n: PathBuf,
    m: PathBuf,
    /// Subalgebra file for the ambient algebra L (default: all matrices).
    ambient: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    certificate: Option<f64>,
    /// Attempt the construction even if the distance bound is >= 1/15.
    #[arg(long)]
    allow_above_gate: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tol: TolArgs,
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn scenario(args: &RunArgs) -> Result<Scenario> {
    let mut s = match &args.config {
        Some(path) => Scenario::from_toml(&fs::read_to_string(path)?)?,
        None => {
            let dim = args.dim.ok_or_else(|| Error::InvalidInput("--dim is required without --config".into()))?;
            Scenario::new(dim, Shape::Masa, 0.01, 0, 1)
        }
    };
    if let Some(d) = args.dim {
        s.ambient_dim = d;
    }
    if let Some(shape) = &args.shape {
        s.shape = shape.parse()?;
    }
    if let Some(e) = args.epsilon {
        s.epsilon = e;
    }
    if let Some(t) = args.trials {
        s.trials = t;
    }
    if let Some(seed) = args.seed {
        s.seed = seed;
    }
    s.validate()?;
    Ok(s)
}

fn run(args: RunArgs) -> Result<bool> {
    let s = scenario(&args)?;
    let res = run_suite(&s)?;
    let ok = res.summary.ok();
    if args.summary_only {
        emit(&res.summary, args.out.as_deref())?;
    } else {
        emit(&res, args.out.as_deref())?;
    }
    if args.out.is_some() {
        eprintln!(
            "{} passed, {} failed, {} skipped; max ||u - I||/d_hi = {:.4}",
            res.summary.passed, res.summary.failed, res.summary.skipped, res.summary.max_ratio
        );
    }
    Ok(ok)
}

fn check(args: CheckArgs) -> Result<bool> {
    let mut cfg = if args.quick { CheckConfig::quick() } else { CheckConfig::default() };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let results = checks::run_all(&cfg)?;
    for c in &results {
        println!("{c}");
    }
    if let Some(p) = &args.out {
        emit(&results, Some(p))?;
    }
    Ok(results.iter().all(|c| c.passed))
}

fn load_pair(n: &Path, m: &Path, tol: &ToleranceProfile) -> Result<(Subalgebra, Subalgebra)> {
    let n = read_subalgebra(n, tol)?;
    let m = read_subalgebra(m, tol)?;
    if n.ambient_dim() != m.ambient_dim() {
        return Err(Error::InvalidInput(format!(
            "ambient dimensions differ: {} vs {}",
            n.ambient_dim(),
            m.ambient_dim()
        )));
    }
    Ok((n, m))
}

fn distance(args: DistanceArgs) -> Result<bool> {
    let tol = args.tol.profile()?;
    let (n, m) = load_pair(&args.n, &args.m, &tol)?;
    let l = Subalgebra::full(n.ambient_dim());
    let e_n = trace_expectation(&l, &n, &tol)?;
    let e_m = trace_expectation(&l, &m, &tol)?;
    let d = distance_interval(&n, &m, &e_m, &e_n, args.samples, args.seed, args.certificate, &tol)?;
    emit(&d, None)?;
    Ok(true)
}

fn conjugate(args: ConjugateArgs) -> Result<bool> {
    let tol = args.tol.profile()?;
    let (n, m) = load_pair(&args.n, &args.m, &tol)?;
    let l = match &args.ambient {
        Some(p) => read_subalgebra(p, &tol)?,
        None => Subalgebra::full(n.ambient_dim()),
    };
    let e_n = trace_expectation(&l, &n, &tol)?;
    let e_m = trace_expectation(&l, &m, &tol)?;
    let d = distance_interval(&n, &m, &e_m, &e_n, args.samples, args.seed, args.certificate, &tol)?;
    let opts = PipelineOptions {
        map_samples: args.samples,
        seed: args.seed,
        allow_above_gate: args.allow_above_gate,
    };
    let rep = conjugating_unitary(&n, &m, &l, &e_n, &e_m, &d, &opts, &tol)?;
    let json = rep.to_json();
    let ok = json.bound_14_ok && json.bound_20_ok && json.conjugacy_residual <= tol.eq_eps;
    emit(&json, args.out.as_deref())?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Check(a) => check(a),
        Command::Distance(a) => distance(a),
        Command::Conjugate(a) => conjugate(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
