use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gsvie_cli::config::{self, ExperimentConfig};
use gsvie_cli::output::write_json;
use gsvie_cli::verify::{run_suite, Injection, DEFAULT_SEED};
use gsvie_cli::{studies, Manifest};

#[derive(Parser)]
#[command(name = "gsvie", version, about = "Volterra equations driven by G-Brownian motion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Overrides monte_carlo.master_seed (or the verify suite seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Caps the worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on every scenario and write paths.csv + summary.json.
    Solve(RunArgs),
    /// Estimate a sublinear expectation and write estimate.json.
    Expect(RunArgs),
    /// Run Picard and write increments.csv + ratefit.json.
    Converge(RunArgs),
    /// Parameter sweep: continuity.csv + slope.json.
    Sweep(RunArgs),
    /// Hoelder exponent study: moments.csv + exponent.json.
    Holder(RunArgs),
    /// Run the invariant suite and write verify.json.
    Verify(VerifyArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Solve(_) => "solve",
            Self::Expect(_) => "expect",
            Self::Converge(_) => "converge",
            Self::Sweep(_) => "sweep",
            Self::Holder(_) => "holder",
            Self::Verify(_) => "verify",
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Break a fixture on purpose; verify must then exit with status 2.
    #[arg(long, value_enum)]
    inject: Option<Injection>,
}

fn prepare(path: &Path, out: Option<PathBuf>, seed: Option<u64>, kind: &str) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = config::load(path)?;
    if cfg.study.kind() != kind {
        bail!("config study.kind is `{}` but the subcommand is `{kind}`", cfg.study.kind());
    }
    if let Some(s) = seed {
        cfg.monte_carlo.master_seed = s;
    }
    if let Some(dir) = out {
        cfg.output.directory = dir.to_string_lossy().into_owned();
    }
    let dir = PathBuf::from(&cfg.output.directory);
    Ok((cfg, dir))
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn manifest(command: &str, seed: u64, config: Option<ExperimentConfig>, start: Instant) -> Manifest {
    Manifest {
        tool: "gsvie".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed,
        config,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    }
}

/// `Ok(false)` when verify found a contract violation.
fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let start = Instant::now();
    let name = cli.command.name();
    match cli.command {
        Command::Verify(args) => {
            let (cfg, dir) = match &args.config {
                Some(path) => {
                    let (cfg, dir) = prepare(path, args.out.clone(), cli.seed, "verify")?;
                    (Some(cfg), dir)
                }
                None => (None, args.out.clone().unwrap_or_else(|| PathBuf::from("gsvie-out"))),
            };
            let seed = cfg
                .as_ref()
                .map(|c| c.monte_carlo.master_seed)
                .or(cli.seed)
                .unwrap_or(DEFAULT_SEED);
            let report = run_suite(seed, args.inject)?;
            create(&dir)?;
            write_json(&dir, "verify.json", &report)?;
            write_json(&dir, "manifest.json", &manifest(name, seed, cfg, start))?;
            for failed in &report.failed {
                eprintln!("verify: check `{failed}` failed");
            }
            Ok(report.passed)
        }
        Command::Solve(a) | Command::Expect(a) | Command::Converge(a) | Command::Sweep(a) | Command::Holder(a) => {
            let (cfg, dir) = prepare(&a.config, a.out, cli.seed, name)?;
            create(&dir)?;
            studies::run_study(&cfg, &dir)?;
            let seed = cfg.monte_carlo.master_seed;
            write_json(&dir, "manifest.json", &manifest(name, seed, Some(cfg), start))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
