use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mclab::config::{ExperimentConfig, Kind};
use mclab::error::{LabError, Result};
use mclab::{experiments, formats, report};
use mclab_core::models::{ModelKind, ModelSpec};
use mclab_core::sampling::{project_omega, sample_bernoulli, sample_uniform};
use mclab_core::solver::{complete, recovered, Algorithm, SolverParams, RECOVERY_TOL};
use mclab_core::StreamRng;

/// Matrix completion experiments.
///
/// Exit codes: 0 success, 1 configuration or input error, 2 numerical
/// failure (including a solve that did not converge).
#[derive(Parser)]
#[command(name = "mclab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Recovery rate over an (n, r, m) grid.
    Phase(RunArgs),
    /// Dual-certificate rate over an (n, r, m) grid.
    Cert(RunArgs),
    /// Unsampled block-row probabilities for the block model.
    Lower(RunArgs),
    /// Uniform against Bernoulli sampling at matched sample counts.
    Equiv(RunArgs),
    /// Trace-moment estimates against their bounds.
    Moments(RunArgs),
    /// Write a ground-truth matrix, and optionally a sample set.
    Gen(GenArgs),
    /// Complete a matrix from a sample-set file.
    Solve(SolveArgs),
}

#[derive(Args)]
struct RunArgs {
    /// key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// csv or svg.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value = "random_orth")]
    model: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ground-truth output file.
    #[arg(long)]
    out: PathBuf,
    /// Also draw a sample set and write it here.
    #[arg(long, requires = "rate")]
    samples: Option<PathBuf>,
    /// Bernoulli sampling rate for --samples.
    #[arg(long, group = "rate")]
    p: Option<f64>,
    /// Uniform sample count for --samples.
    #[arg(long, group = "rate")]
    m: Option<usize>,
    /// Write the observed values into the sample file.
    #[arg(long)]
    values: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// Sample-set file, with values or paired with --truth.
    #[arg(long)]
    samples: PathBuf,
    /// Ground truth; supplies observations and the recovery check.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write the completed matrix here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "admm")]
    solver: String,
    /// Rank hint; enables the truncated SVD.
    #[arg(long)]
    rank_hint: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol_feas: Option<f64>,
    #[arg(long, default_value_t = RECOVERY_TOL)]
    recovery_tol: f64,
}

fn config_error(msg: impl Into<String>) -> LabError {
    LabError::Config(msg.into())
}

fn run_experiment(kind: Kind, args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_path(path, Some(kind))?,
        None => ExperimentConfig::new(kind),
    };
    for kv in &args.set {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.threads {
        cfg.threads = Some(t);
    }
    if let Some(out) = args.out {
        cfg.out = Some(out);
    }
    if let Some(f) = &args.format {
        cfg.format = f.parse()?;
    }
    let rows = experiments::run(&cfg)?;
    let text = report::render(&rows, cfg.format)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| LabError::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| LabError::io("<stdout>", e)),
    }
}

fn generate(args: GenArgs) -> Result<()> {
    let kind: ModelKind = args
        .model
        .parse()
        .map_err(|_| config_error(format!("unknown model '{}'", args.model)))?;
    let mut rng = StreamRng::new(args.seed, 0);
    let gt = ModelSpec::from_kind(kind, args.n)?.generate(args.n, args.r, &mut rng)?;
    formats::write_truth(&args.out, &gt)?;
    if let Some(path) = &args.samples {
        let s = match (args.p, args.m) {
            (Some(p), None) => sample_bernoulli(args.n, p, &mut rng)?,
            (None, Some(m)) => sample_uniform(args.n, m, &mut rng)?,
            _ => return Err(config_error("--samples needs exactly one of --p or --m")),
        };
        let values = args.values.then(|| project_omega(gt.matrix(), &s)).transpose()?;
        formats::write_samples(path, &s, values.as_ref())?;
    }
    Ok(())
}

/// Returns whether the solve converged.
fn solve(args: SolveArgs) -> Result<bool> {
    let (s, values) = formats::read_samples(&args.samples)?;
    let truth = args.truth.as_deref().map(formats::read_truth).transpose()?;
    let observed = match (values, &truth) {
        (Some(v), _) => v,
        (None, Some(gt)) => project_omega(gt.matrix(), &s)?,
        (None, None) => {
            return Err(config_error("sample file has no values; pass --truth"));
        }
    };
    let mut params = SolverParams {
        algorithm: args
            .solver
            .parse::<Algorithm>()
            .map_err(|_| config_error(format!("unknown solver '{}'", args.solver)))?,
        ..Default::default()
    };
    if let Some(k) = args.max_iter {
        params.max_iter = k;
    }
    if let Some(t) = args.tol_feas {
        params.tol_feas = t;
    }
    if let Some(r) = args.rank_hint {
        params = params.with_rank_hint(s.n1().min(s.n2()), r);
    }
    let res = complete(&s, &observed, &params)?;
    let mut line = format!(
        "iters={} converged={} feas_resid={} nuclear={} rank={}",
        res.iters, res.converged, res.feas_resid, res.nuclear_value, res.rank
    );
    if let Some(gt) = &truth {
        let (ok, err) = recovered(gt.matrix(), &res.xhat, args.recovery_tol)?;
        line += &format!(" relerr={err} recovered={ok}");
    }
    println!("{line}");
    if let Some(path) = &args.out {
        formats::write_matrix(path, &res.xhat)?;
    }
    Ok(res.converged)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.cmd {
        Cmd::Phase(a) => run_experiment(Kind::Phase, a).map(|_| true),
        Cmd::Cert(a) => run_experiment(Kind::Certificate, a).map(|_| true),
        Cmd::Lower(a) => run_experiment(Kind::LowerBound, a).map(|_| true),
        Cmd::Equiv(a) => run_experiment(Kind::ModelEquiv, a).map(|_| true),
        Cmd::Moments(a) => run_experiment(Kind::Moments, a).map(|_| true),
        Cmd::Gen(a) => generate(a).map(|_| true),
        Cmd::Solve(a) => solve(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("mclab: solver did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("mclab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
