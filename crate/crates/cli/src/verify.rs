//! The fixed-seed invariant suite behind `gsvie verify`.

use std::collections::BTreeMap;
use std::f64::consts::E;

use anyhow::Result;
use serde::Serialize;

use gsvie_core::analysis::{
    bihari_majorant, fit_factorial_rate, holder_exponent, jensen_gap, parameter_continuity_study,
    well_posedness_suite, WellPosednessConfig,
};
use gsvie_core::coefficients::{
    audit_integral_lipschitz, audit_lipschitz, audit_parameter_lipschitz, audit_time_regularity,
    builtin_family, AuditReport, CoefficientFamily, FamilyParams, HypothesisClass, HypothesisMetadata,
    ProbeConfig, SamplerConfig, BUILTIN_FAMILIES,
};
use gsvie_core::expectation::{
    ito_isometry_report, maximal_inequality_report, sup_msq_distance, AdaptedProcess, Estimate,
    Extremum,
};
use gsvie_core::rng::UniformStream;
use gsvie_core::scenario::{build_control_lattice, Ensemble, GParams, LatticeSpec, Scenario, TimeGrid};
use gsvie_core::solver::{
    direct_solve_ensemble, picard_solve, solve_expect, PicardOptions, PicardStart, SolverChoice,
    VolterraProblem,
};

use crate::config::scale_lipschitz;

pub const DEFAULT_SEED: u64 = 42;

/// Deliberately broken fixtures for exercising the failure path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Injection {
    /// Halves the declared Lipschitz witness of `linear_ode`.
    LipschitzViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    pub margins: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub injection: Option<Injection>,
    pub passed: bool,
    pub failed: Vec<String>,
    pub checks: BTreeMap<String, Check>,
}

#[derive(Default)]
struct Suite {
    checks: BTreeMap<String, Check>,
}

impl Suite {
    fn record<const K: usize>(&mut self, name: &str, passed: bool, margins: [(&str, f64); K]) {
        let margins = margins.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        self.checks.insert(name.to_string(), Check { passed, margins });
    }
}

fn builtin(name: &str, params: &[(&str, f64)]) -> Result<(CoefficientFamily, HypothesisMetadata)> {
    let p: FamilyParams = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    Ok(builtin_family(name, &p)?)
}

fn problem(name: &str, params: &[(&str, f64)], steps: usize, low: f64, high: f64) -> Result<VolterraProblem> {
    let (f, m) = builtin(name, params)?;
    Ok(VolterraProblem::new(f, m, TimeGrid::new(1.0, steps)?, GParams::new(low, high)?))
}

fn ensemble(p: &VolterraProblem, levels: usize, pieces: usize, replicas: usize, seed: u64) -> Result<Ensemble> {
    let controls = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(levels, pieces))?;
    Ok(Ensemble::generate(*p.params(), p.grid().clone(), controls, replicas, seed)?)
}

fn terminal_b(s: &Scenario) -> f64 {
    s.db().iter().sum()
}

fn quantize(v: f64) -> f64 {
    let scale = (1u64 << 20) as f64;
    ((v.clamp(-1000.0, 1000.0)) * scale).round() / scale
}

fn estimator_axioms(suite: &mut Suite, seed: u64) -> Result<()> {
    let p = problem("zero", &[], 16, 1.0, 2.0)?;
    let e = ensemble(&p, 3, 2, 64, seed)?;
    let features: Vec<[f64; 3]> = e.map_scenarios(|s| {
        let b = terminal_b(s);
        [b, b * b, s.dqv().iter().sum()]
    });
    let mut rng = UniformStream::new(seed ^ 0x5eed);
    let mut draw = || -> Vec<f64> {
        let (a, w, c) = (rng.range(-4.0, 4.0), rng.range(0.1, 3.0), rng.range(-2.0, 2.0));
        features
            .iter()
            .map(|f| quantize(a * (w * f[0]).sin() + c * f[2] + 0.1 * a * f[1]))
            .collect()
    };
    let sup = |v: &[f64]| Estimate::from_values(&e, v, Extremum::Sup).map(|x| x.value);
    let inf = |v: &[f64]| Estimate::from_values(&e, v, Extremum::Inf).map(|x| x.value);
    let mut violations = [0usize; 5];
    for trial in 0..100 {
        let x = draw();
        let y = draw();
        let (ex, ey) = (sup(&x)?, sup(&y)?);
        let hi: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a.max(*b)).collect();
        if sup(&hi)? < ex {
            violations[0] += 1;
        }
        let c = quantize(x[0]);
        if sup(&vec![c; e.len()])? != c {
            violations[1] += 1;
        }
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        if sup(&sum)? > ex + ey {
            violations[2] += 1;
        }
        let lambda = [0.25, 0.5, 2.0, 4.0][trial % 4];
        let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        if sup(&scaled)? != lambda * ex {
            violations[3] += 1;
        }
        if inf(&x)? > ex {
            violations[4] += 1;
        }
    }
    let names = ["monotonicity", "constants", "subadditivity", "homogeneity", "lower_below_upper"];
    for (name, v) in names.iter().zip(violations) {
        suite.record(&format!("axiom_{name}"), v == 0, [("trials", 100.0), ("violations", v as f64)]);
    }
    Ok(())
}

fn quadratic_variation_band(suite: &mut Suite, seed: u64) -> Result<()> {
    let p = problem("zero", &[], 100, 1.0, 2.0)?;
    let e = ensemble(&p, 3, 2, 112, seed)?;
    let dt = e.grid().dt();
    let (lo, hi) = (e.params().var_low() * dt, e.params().var_high() * dt);
    let counts: Vec<(usize, usize)> = e.map_scenarios(|s| {
        let bad = s.dqv().iter().filter(|&&q| !(lo <= q && q <= hi)).count();
        (s.dqv().len(), bad)
    });
    let total: usize = counts.iter().map(|c| c.0).sum();
    let bad: usize = counts.iter().map(|c| c.1).sum();
    suite.record(
        "quadratic_variation_band",
        bad == 0 && total >= 100_000,
        [("increments", total as f64), ("violations", bad as f64), ("controls", e.control_count() as f64)],
    );
    Ok(())
}

fn isometry_and_doob(suite: &mut Suite, seed: u64) -> Result<()> {
    let p = problem("zero", &[], 50, 1.0, 2.0)?;
    let e = ensemble(&p, 2, 1, 2000, seed)?;
    let integrands = [
        ("constant", AdaptedProcess::constant(&e, 1.0)),
        ("sin_b", AdaptedProcess::driver(&e).map(f64::sin)),
    ];
    for (label, eta) in integrands {
        let iso = ito_isometry_report(&eta, &e)?;
        suite.record(
            &format!("isometry_{label}"),
            iso.lhs_matches_mid && iso.mid_within_rhs,
            [
                ("lhs", iso.lhs.value),
                ("lhs_se", iso.lhs.std_error),
                ("mid", iso.mid.value),
                ("mid_se", iso.mid.std_error),
                ("rhs", iso.rhs.value),
            ],
        );
        let doob = maximal_inequality_report(&eta, &e)?;
        suite.record(
            &format!("doob_{label}"),
            doob.holds,
            [
                ("sup_moment", doob.sup_moment.value),
                ("sup_moment_se", doob.sup_moment.std_error),
                ("bound", doob.doob_bound.value),
            ],
        );
    }
    Ok(())
}

fn max_abs_diff(a: &AdaptedProcess, b: &AdaptedProcess) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn picard_equals_direct(suite: &mut Suite, seed: u64) -> Result<()> {
    let n = 100;
    for name in ["linear_ode", "conv_cosh", "geometric"] {
        let p = problem(name, &[], n, 1.0, 2.0)?;
        let e = ensemble(&p, 2, 1, 16, seed)?;
        let (pic, rep) = picard_solve(&p, &e, &PicardOptions::new(f64::MIN_POSITIVE, n))?;
        let direct = direct_solve_ensemble(&p, &e)?;
        let diff = max_abs_diff(&pic.paths, &direct.paths);
        suite.record(
            &format!("picard_equals_direct_{name}"),
            diff <= 1e-12,
            [("max_abs_difference", diff), ("iterations", rep.iterations as f64)],
        );
    }
    Ok(())
}

fn uniqueness(suite: &mut Suite, seed: u64) -> Result<()> {
    let p = problem("geometric", &[], 100, 1.0, 2.0)?;
    let e = ensemble(&p, 2, 1, 32, seed)?;
    let opts = PicardOptions::new(1e-8, 200);
    let (a, ra) = picard_solve(&p, &e, &opts)?;
    let (b, rb) = picard_solve(&p, &e, &opts.starting_at(PicardStart::Offset(1.0)))?;
    let d = sup_msq_distance(&a.paths, &b.paths, &e)?;
    suite.record(
        "uniqueness",
        ra.converged && rb.converged && d <= 1e-8,
        [("distance", d), ("iterations_forcing", ra.iterations as f64), ("iterations_offset", rb.iterations as f64)],
    );
    Ok(())
}

fn classical_reductions(suite: &mut Suite, seed: u64) -> Result<()> {
    for (name, target) in [("linear_ode", E), ("conv_cosh", 1f64.cosh())] {
        let p = problem(name, &[], 2000, 1.0, 1.0)?;
        let e = ensemble(&p, 1, 1, 1, seed)?;
        let x = p.direct_solve(&e.scenario(0))?;
        let err = (x[2000] - target).abs();
        suite.record(&format!("reduction_{name}"), err <= 5e-3, [("terminal", x[2000]), ("error", err)]);
    }
    let p = problem("geometric", &[], 200, 0.5, 1.0)?;
    let e = ensemble(&p, 2, 1, 4000, seed)?;
    let est = solve_expect(&p, &e, |x, _| x[x.len() - 1].powi(2), &SolverChoice::Direct)?;
    let target = E;
    let allowed = 3.0 * est.std_error() + 0.05 * target;
    let err = (est.value - target).abs();
    suite.record(
        "reduction_geometric_moment",
        err <= allowed && est.extremal_control == e.control_count() - 1,
        [("estimate", est.value), ("std_error", est.std_error()), ("target", target), ("allowed", allowed)],
    );
    Ok(())
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn factorial_contraction(suite: &mut Suite, seed: u64) -> Result<()> {
    let p = problem("linear_ode", &[], 2000, 1.0, 1.0)?;
    let e = ensemble(&p, 1, 1, 1, seed)?;
    // n <= 8; the least-squares envelope of a super-factorial sequence
    // drifts further from the data as the window grows
    let (_, rep) = picard_solve(&p, &e, &PicardOptions::new(f64::MIN_POSITIVE, 9))?;
    let fit = fit_factorial_rate(&rep.increments, p.metadata().theta(), 1.0)?;
    let rel = rep
        .increments
        .iter()
        .enumerate()
        .map(|(n, d)| {
            let oracle = (-2.0 * ln_factorial(n + 1)).exp();
            (d - oracle).abs() / oracle
        })
        .fold(0.0, f64::max);
    let max_residual = fit.residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    suite.record(
        "factorial_fit",
        fit.passed,
        [
            ("log_c", fit.constant("log_c").unwrap_or(f64::NAN)),
            ("log_m", fit.constant("log_m").unwrap_or(f64::NAN)),
            ("max_residual", max_residual),
            ("tail", fit.constant("tail").unwrap_or(f64::NAN)),
            ("max_relative_error_vs_continuum", rel),
        ],
    );
    Ok(())
}

fn integral_lipschitz(suite: &mut Suite, seed: u64) -> Result<()> {
    let (f, m) = builtin("log_modulus", &[])?;
    let report = audit_integral_lipschitz(&f, &m, &SamplerConfig::default(), &ProbeConfig::default())?;
    let probe = report.probe.clone();
    suite.record(
        "integral_lipschitz_audit",
        report.passed(),
        [
            ("max_ratio", report.max_ratio()),
            ("partial_sum", probe.as_ref().map_or(f64::NAN, |p| *p.partial_sums.last().unwrap_or(&f64::NAN))),
            ("window_ratio", probe.as_ref().map_or(f64::NAN, |p| p.window_ratio)),
        ],
    );
    let squared = m.clone().with_psi(|u| u * u);
    let neg = audit_integral_lipschitz(&f, &squared, &SamplerConfig::default(), &ProbeConfig::default())?;
    suite.record("integral_lipschitz_negative_control", !neg.passed(), [("max_ratio", neg.max_ratio())]);

    let p = VolterraProblem::new(f, m, TimeGrid::new(1.0, 100)?, GParams::new(1.0, 2.0)?);
    let e = ensemble(&p, 2, 1, 32, seed)?;
    let (_, rep) = picard_solve(&p, &e, &PicardOptions::stochastic(100))?;
    let monotone = rep.increments.windows(2).skip(2).all(|w| w[1] <= w[0]);
    suite.record(
        "integral_lipschitz_picard",
        rep.converged && monotone,
        [
            ("iterations", rep.iterations as f64),
            ("final_increment", *rep.increments.last().unwrap_or(&f64::NAN)),
        ],
    );
    Ok(())
}

const SWEEP: [f64; 5] = [0.0, 0.05, 0.1, 0.2, 0.4];

fn parameter_slope(suite: &mut Suite, seed: u64) -> Result<()> {
    for (label, dd, replicas) in [("parameter_slope", 1.0, 200), ("parameter_slope_degenerate", 0.0, 8)] {
        let p = problem("affine_param", &[("drift_diffusion", dd)], 50, 1.0, 2.0)?;
        let e = ensemble(&p, 2, 1, replicas, seed)?;
        let study = parameter_continuity_study(&p, &SWEEP, &e, &SolverChoice::Direct)?;
        let slope = study.fit.constant("slope").unwrap_or(f64::NAN);
        let passed = if dd == 0.0 {
            (slope - 2.0).abs() <= 1e-12
        } else {
            study.fit.passed
        };
        suite.record(
            label,
            passed,
            [
                ("slope", slope),
                ("log_bound_constant", study.log_bound_constant),
                ("bound_holds", study.bound_holds as u8 as f64),
            ],
        );
    }
    Ok(())
}

fn audit(family: &CoefficientFamily, meta: &HypothesisMetadata) -> Result<Vec<AuditReport>> {
    let cfg = SamplerConfig::default();
    let mut out = Vec::new();
    match meta.class {
        HypothesisClass::TimeVaryingLipschitz => {
            out.push(audit_lipschitz(family, meta, &cfg)?);
            out.push(audit_time_regularity(family, meta, &cfg)?);
        }
        HypothesisClass::IntegralLipschitz => {
            out.push(audit_integral_lipschitz(family, meta, &cfg, &ProbeConfig::default())?);
            out.push(audit_time_regularity(family, meta, &cfg)?);
        }
        HypothesisClass::ParameterLipschitz => {
            out.push(audit_lipschitz(family, meta, &cfg)?);
            out.push(audit_time_regularity(family, meta, &cfg)?);
            out.push(audit_parameter_lipschitz(family, meta, &cfg)?);
        }
    }
    Ok(out)
}

fn audits(suite: &mut Suite, injection: Option<Injection>) -> Result<()> {
    for name in BUILTIN_FAMILIES {
        let (f, mut m) = builtin(name, &[])?;
        if name == "linear_ode" && injection == Some(Injection::LipschitzViolation) {
            scale_lipschitz(&mut m, 0.5);
        }
        let reports = audit(&f, &m)?;
        let passed = reports.iter().all(AuditReport::passed);
        let worst = reports.iter().map(AuditReport::max_ratio).fold(0.0, f64::max);
        let failing = reports
            .iter()
            .flat_map(|r| &r.checks)
            .filter(|c| !c.passed)
            .count();
        suite.record(
            &format!("audit_{name}"),
            passed,
            [("max_ratio", worst), ("failing_checks", failing as f64)],
        );
    }
    Ok(())
}

fn well_posedness(suite: &mut Suite, seed: u64) -> Result<()> {
    let p = problem("geometric", &[], 50, 1.0, 2.0)?;
    let controls = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(2, 2))?;
    let e = Ensemble::branching(*p.params(), p.grid().clone(), controls, seed, &[0, 10, 25, 40, 50])?;
    let cfg = WellPosednessConfig {
        ceiling: 100.0,
        eps: 0.0,
    };
    let r = well_posedness_suite(&p, &e, &cfg)?;
    suite.record(
        "well_posedness",
        r.passed,
        [
            ("norm_2", r.norm_2),
            ("sup_second_moment", r.sup_second_moment),
            ("ceiling", cfg.ceiling),
        ],
    );
    Ok(())
}

fn holder(suite: &mut Suite, seed: u64) -> Result<()> {
    let p = problem("zero", &[], 1024, 1.0, 1.0)?;
    let e = ensemble(&p, 1, 1, 500, seed)?;
    let study = holder_exponent(&AdaptedProcess::driver(&e), 4.0, &e, 1.0)?;
    let x = study.fit.constant("exponent").unwrap_or(f64::NAN);
    suite.record("holder_driver", (1.8..=2.2).contains(&x), [("exponent", x)]);
    Ok(())
}

fn inequalities(suite: &mut Suite, seed: u64) -> Result<()> {
    let gamma = |v: f64| if v <= 0.0 { 0.0 } else { v * (1.0 - v.ln()).max(1.0) };
    let small = bihari_majorant(gamma, 1e-20, 1.0)?.value().unwrap_or(f64::INFINITY);
    let larger = bihari_majorant(gamma, 1e-10, 1.0)?.value().unwrap_or(f64::INFINITY);
    suite.record(
        "bihari_vanishing",
        small < larger && small < 1e-6,
        [("majorant_1e-20", small), ("majorant_1e-10", larger)],
    );
    let p = problem("zero", &[], 20, 1.0, 2.0)?;
    let e = ensemble(&p, 2, 1, 2000, seed)?;
    let j = jensen_gap(f64::sqrt, |s| terminal_b(s).powi(2), &e)?;
    suite.record(
        "jensen",
        j.holds,
        [("lhs", j.lhs.value), ("lhs_se", j.lhs.std_error), ("rhs", j.rhs)],
    );
    Ok(())
}

/// Runs every check. Seeds are offsets of `seed`, so the suite is a pure
/// function of it (and of the injection).
pub fn run_suite(seed: u64, injection: Option<Injection>) -> Result<VerifyReport> {
    let mut suite = Suite::default();
    let s = |k: u64| seed.wrapping_add(k);
    estimator_axioms(&mut suite, s(1))?;
    quadratic_variation_band(&mut suite, s(2))?;
    isometry_and_doob(&mut suite, s(3))?;
    picard_equals_direct(&mut suite, s(4))?;
    uniqueness(&mut suite, s(5))?;
    classical_reductions(&mut suite, s(6))?;
    factorial_contraction(&mut suite, s(7))?;
    integral_lipschitz(&mut suite, s(8))?;
    parameter_slope(&mut suite, s(9))?;
    audits(&mut suite, injection)?;
    well_posedness(&mut suite, s(10))?;
    holder(&mut suite, s(11))?;
    inequalities(&mut suite, s(12))?;
    let failed: Vec<String> = suite
        .checks
        .iter()
        .filter(|(_, c)| !c.passed)
        .map(|(n, _)| n.clone())
        .collect();
    Ok(VerifyReport {
        seed,
        injection,
        passed: failed.is_empty(),
        failed,
        checks: suite.checks,
    })
}
