//! Runners for the solve, expect, converge, sweep and holder studies.

use std::path::Path;

use anyhow::{bail, Result};
use serde::Serialize;

use gsvie_core::analysis::{fit_factorial_rate, holder_exponent, parameter_continuity_study, RateFit};
use gsvie_core::expectation::{sup_msq_distance, AdaptedProcess, Estimate, Extremum, Measured};
use gsvie_core::scenario::{Ensemble, Scenario};
use gsvie_core::solver::{picard_solve, solve, PicardReport, SolutionEnsemble, SolverKind};

use crate::config::{ExperimentConfig, HolderProcess, Payoff, StudyConfig};
use crate::output::{fmt_f64, write_json, Csv};

#[derive(Serialize)]
struct Summary<'a> {
    family: &'a str,
    alpha: f64,
    solver: SolverKind,
    controls: usize,
    replicas: usize,
    steps: usize,
    terminal_second_moment: Measured,
    terminal_argmax_control: usize,
    sup_second_moment: f64,
    picard: Option<PicardReport>,
}

fn terminal_values(solution: &SolutionEnsemble, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = solution.paths.steps();
    (0..solution.paths.scenarios())
        .map(|k| f(solution.paths.value(k, n)))
        .collect()
}

pub fn run_solve(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let problem = cfg.problem()?;
    let ensemble = cfg.ensemble()?;
    let (solution, report) = solve(&problem, &ensemble, &cfg.solver.choice())?;
    let times = ensemble.grid().times();
    let mut csv = Csv::new(&["scenario_id", "control_id", "t", "X"]);
    for k in 0..ensemble.len() {
        let control = ensemble.key(k).control.to_string();
        let id = k.to_string();
        for (i, x) in solution.paths.path(k).iter().enumerate() {
            csv.row(&[id.clone(), control.clone(), fmt_f64(times[i]), fmt_f64(*x)]);
        }
    }
    csv.write(dir, "paths.csv")?;
    let terminal = Estimate::from_values(&ensemble, &terminal_values(&solution, |x| x * x), Extremum::Sup)?;
    let zero = AdaptedProcess::constant(&ensemble, 0.0);
    write_json(
        dir,
        "summary.json",
        &Summary {
            family: &solution.family,
            alpha: solution.alpha,
            solver: solution.solver,
            controls: ensemble.control_count(),
            replicas: ensemble.replicas(),
            steps: ensemble.grid().steps(),
            terminal_second_moment: Measured::from(&terminal),
            terminal_argmax_control: terminal.extremal_control,
            sup_second_moment: sup_msq_distance(&solution.paths, &zero, &ensemble)?,
            picard: report,
        },
    )
}

fn payoff_values(cfg: &ExperimentConfig, ensemble: &Ensemble, payoff: Payoff) -> Result<Vec<f64>> {
    let terminal_b = |s: &Scenario| s.db().iter().sum::<f64>();
    Ok(match payoff {
        Payoff::BTerminal => ensemble.map_scenarios(terminal_b),
        Payoff::BTerminalSquare => ensemble.map_scenarios(|s| terminal_b(s).powi(2)),
        _ => {
            let (solution, _) = solve(&cfg.problem()?, ensemble, &cfg.solver.choice())?;
            match payoff {
                Payoff::XTerminal => terminal_values(&solution, |x| x),
                Payoff::XTerminalSquare => terminal_values(&solution, |x| x * x),
                _ => (0..ensemble.len())
                    .map(|k| solution.paths.path(k).iter().fold(0.0, |m, x| f64::max(m, x.abs())))
                    .collect(),
            }
        }
    })
}

#[derive(Serialize)]
struct Bound {
    value: f64,
    std_error: f64,
    control: usize,
}

#[derive(Serialize)]
struct EstimateFile {
    payoff: Payoff,
    value: f64,
    std_error: f64,
    argmax: usize,
    lower: Bound,
    per_control: Vec<gsvie_core::expectation::ControlMean>,
}

pub fn run_expect(cfg: &ExperimentConfig, dir: &Path, payoff: Payoff) -> Result<()> {
    let ensemble = cfg.ensemble()?;
    let values = payoff_values(cfg, &ensemble, payoff)?;
    let upper = Estimate::from_values(&ensemble, &values, Extremum::Sup)?;
    let lower = Estimate::from_values(&ensemble, &values, Extremum::Inf)?;
    write_json(
        dir,
        "estimate.json",
        &EstimateFile {
            payoff,
            value: upper.value,
            std_error: upper.std_error(),
            argmax: upper.extremal_control,
            lower: Bound {
                value: lower.value,
                std_error: lower.std_error(),
                control: lower.extremal_control,
            },
            per_control: upper.per_control,
        },
    )
}

#[derive(Serialize)]
struct RateFile {
    converged: bool,
    iterations: usize,
    tol: f64,
    horizon: f64,
    fit: RateFit,
}

pub fn run_converge(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let problem = cfg.problem()?;
    let ensemble = cfg.ensemble()?;
    let (_, report) = picard_solve(&problem, &ensemble, &cfg.solver.picard_options())?;
    let mut csv = Csv::new(&["iter", "d_n"]);
    for (n, d) in report.increments.iter().enumerate() {
        csv.row(&[n.to_string(), fmt_f64(*d)]);
    }
    csv.write(dir, "increments.csv")?;
    let horizon = ensemble.grid().horizon();
    let fit = fit_factorial_rate(&report.increments, problem.metadata().theta(), horizon)?;
    write_json(
        dir,
        "ratefit.json",
        &RateFile {
            converged: report.converged,
            iterations: report.iterations,
            tol: report.tol,
            horizon,
            fit,
        },
    )
}

#[derive(Serialize)]
struct SlopeFile {
    slope: f64,
    passed: bool,
    bound_holds: bool,
    log_bound_constant: f64,
    fit: RateFit,
}

pub fn run_sweep(cfg: &ExperimentConfig, dir: &Path, alphas: &[f64]) -> Result<()> {
    let problem = cfg.problem()?;
    if !problem.family().is_parameterized() {
        bail!(
            "section study: sweep needs a parameterized family, `{}` is not",
            problem.family().name()
        );
    }
    let ensemble = cfg.ensemble()?;
    let study = parameter_continuity_study(&problem, alphas, &ensemble, &cfg.solver.choice())?;
    let mut csv = Csv::new(&["alpha", "beta", "distance"]);
    for p in &study.pairs {
        csv.row(&[fmt_f64(p.alpha), fmt_f64(p.beta), fmt_f64(p.distance)]);
    }
    csv.write(dir, "continuity.csv")?;
    write_json(
        dir,
        "slope.json",
        &SlopeFile {
            slope: study.fit.constant("slope").unwrap_or(f64::NAN),
            passed: study.fit.passed,
            bound_holds: study.bound_holds,
            log_bound_constant: study.log_bound_constant,
            fit: study.fit,
        },
    )
}

#[derive(Serialize)]
struct ExponentFile {
    process: HolderProcess,
    exponent: f64,
    c: f64,
    passed: bool,
    fit: RateFit,
}

pub fn run_holder(
    cfg: &ExperimentConfig,
    dir: &Path,
    process: HolderProcess,
    p: f64,
    eps_prime: f64,
) -> Result<()> {
    let ensemble = cfg.ensemble()?;
    let x = match process {
        HolderProcess::Driver => AdaptedProcess::driver(&ensemble),
        HolderProcess::Solution => solve(&cfg.problem()?, &ensemble, &cfg.solver.choice())?.0.paths,
    };
    let study = holder_exponent(&x, p, &ensemble, eps_prime)?;
    let mut csv = Csv::new(&["lag", "moment"]);
    for (lag, m) in &study.moments {
        csv.row(&[fmt_f64(*lag), fmt_f64(*m)]);
    }
    csv.write(dir, "moments.csv")?;
    write_json(
        dir,
        "exponent.json",
        &ExponentFile {
            process,
            exponent: study.fit.constant("exponent").unwrap_or(f64::NAN),
            c: study.fit.constant("c").unwrap_or(f64::NAN),
            passed: study.fit.passed,
            fit: study.fit,
        },
    )
}

/// Dispatches a non-verify study.
pub fn run_study(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    match &cfg.study {
        StudyConfig::Solve => run_solve(cfg, dir),
        StudyConfig::Expect { payoff } => run_expect(cfg, dir, *payoff),
        StudyConfig::Converge => run_converge(cfg, dir),
        StudyConfig::Sweep { alphas } => run_sweep(cfg, dir, alphas),
        StudyConfig::Holder { process, p, eps_prime } => run_holder(cfg, dir, *process, *p, *eps_prime),
        StudyConfig::Verify => bail!("verify is run by the verify subcommand"),
    }
}
