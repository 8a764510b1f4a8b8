use std::f64::consts::E;

use gsvie_core::analysis::{bihari_majorant, gronwall_bound, holder_exponent, jensen_gap, well_posedness_suite, WellPosednessConfig};
use gsvie_core::coefficients::{audit_lipschitz, audit_time_regularity, builtin_family, FamilyParams, SamplerConfig};
use gsvie_core::expectation::{estimate, lower_expectation, AdaptedProcess};
use gsvie_core::scenario::{build_control_lattice, Ensemble, GParams, LatticeSpec, Scenario, TimeGrid};
use gsvie_core::solver::{direct_solve_ensemble, picard_solve, solve_expect, PicardOptions, SolverChoice, VolterraProblem};
use proptest::prelude::*;

fn problem(name: &str, params: &[(&str, f64)], steps: usize, low: f64, high: f64) -> VolterraProblem {
    let p: FamilyParams = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    let (f, m) = builtin_family(name, &p).unwrap();
    VolterraProblem::new(f, m, TimeGrid::new(1.0, steps).unwrap(), GParams::new(low, high).unwrap())
}

fn ensemble(p: &VolterraProblem, levels: usize, pieces: usize, replicas: usize, seed: u64) -> Ensemble {
    let c = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(levels, pieces)).unwrap();
    Ensemble::generate(*p.params(), p.grid().clone(), c, replicas, seed).unwrap()
}

#[test]
fn classical_geometric_second_moment() {
    let p = problem("geometric", &[], 200, 1.0, 1.0);
    let e = ensemble(&p, 1, 1, 4000, 3);
    let est = solve_expect(&p, &e, |x, _| x[x.len() - 1].powi(2), &SolverChoice::Direct).unwrap();
    // E[X_N^2] = (1 + dt)^N for the left-point scheme
    let exact = (1.0 + 1.0 / 200.0f64).powi(200);
    assert!((est.value - exact).abs() <= 3.0 * est.std_error(), "{} vs {exact}", est.value);
    assert!((exact - E).abs() < 0.05 * E);
}

#[test]
fn linear_solution_stays_below_gronwall_bound() {
    let p = problem("linear_ode", &[], 500, 1.0, 1.0);
    let e = ensemble(&p, 1, 1, 1, 0);
    let x = p.direct_solve(&e.scenario(0)).unwrap();
    for (i, v) in x.iter().enumerate() {
        let t = p.grid().time(i);
        assert!(*v <= gronwall_bound(1.0, 1.0, t).unwrap() * (1.0 + 1e-12));
    }
}

#[test]
fn upper_and_lower_expectations_of_driver_functionals() {
    let p = problem("zero", &[], 40, 0.5, 1.5);
    let e = ensemble(&p, 3, 4, 1000, 17);
    let sq = |s: &Scenario| s.db().iter().sum::<f64>().powi(2);
    let up = estimate(&e, sq).unwrap();
    let lo = lower_expectation(&e, sq).unwrap();
    assert!((up.value - 2.25).abs() <= 3.0 * up.std_error());
    assert!((lo.value - 0.25).abs() <= 3.0 * lo.std_error());
    assert_eq!(up.extremal_control, e.control_count() - 1);
    assert_eq!(lo.extremal_control, 0);
    // E^[-X] = -(lower expectation of X)
    let neg = estimate(&e, |s| -sq(s)).unwrap();
    assert_eq!(neg.value, -lo.value);
}

#[test]
fn singular_kernel_end_to_end() {
    let p = problem("singular_kernel", &[], 256, 1.0, 1.5);
    let (f, m) = builtin_family("singular_kernel", &FamilyParams::new()).unwrap();
    assert!(audit_lipschitz(&f, &m, &SamplerConfig::default()).unwrap().passed());
    assert!(audit_time_regularity(&f, &m, &SamplerConfig::default()).unwrap().passed());

    let small = ensemble(&p, 2, 2, 2, 5);
    let (pic, rep) = picard_solve(&p, &small, &PicardOptions::new(f64::MIN_POSITIVE, 257)).unwrap();
    assert!(rep.converged);
    assert_eq!(pic.paths, direct_solve_ensemble(&p, &small).unwrap().paths);

    let e = ensemble(&p, 2, 2, 300, 5);
    let sol = direct_solve_ensemble(&p, &e).unwrap();

    // stochastic-integral part: only the exponent >= 1 is claimed
    let parts = (0..e.len())
        .map(|k| p.integral_processes(sol.paths.path(k), &e.scenario(k)).map(|(m, _)| m))
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    let m = AdaptedProcess::from_paths(256, parts).unwrap();
    let h = holder_exponent(&m, 2.0 + p.metadata().eps, &e, 0.0).unwrap();
    assert!(h.fit.constant("exponent").unwrap() >= 1.0, "{:?}", h.fit);
}

#[test]
fn well_posedness_on_log_modulus() {
    let p = problem("log_modulus", &[], 60, 1.0, 2.0);
    let c = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(2, 3)).unwrap();
    let e = Ensemble::branching(*p.params(), p.grid().clone(), c, 3, &[0, 7, 20, 41, 60]).unwrap();
    let cfg = WellPosednessConfig { ceiling: 1e3, eps: 0.0 };
    let r = well_posedness_suite(&p, &e, &cfg).unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn bihari_majorant_of_the_log_modulus() {
    // v' = c v (1 - ln v) with c = 2 (1 + k^2): 1 - ln v(t) = (1 - ln v0) e^{-ct}
    let (_, m) = builtin_family("log_modulus", &FamilyParams::new()).unwrap();
    let psi = m.psi.clone().unwrap();
    let c: f64 = 2.0 * (1.0 + 0.25);
    let mut last = f64::INFINITY;
    for v0 in [1e-30, 1e-60, 1e-120, 1e-240] {
        let v = bihari_majorant(|u| psi(u), v0, 1.0).unwrap().value().unwrap();
        let exact = (1.0 - (1.0 - f64::ln(v0)) * (-c).exp()).exp();
        assert!((v - exact).abs() <= 1e-6 * exact, "{v} vs {exact}");
        assert!(v < last);
        last = v;
    }
    assert!(last < 1e-18);
}

#[test]
fn jensen_for_the_modulus() {
    let p = problem("zero", &[], 20, 1.0, 2.0);
    let e = ensemble(&p, 2, 1, 500, 8);
    let (_, m) = builtin_family("log_modulus", &FamilyParams::new()).unwrap();
    let psi = m.psi.clone().unwrap();
    let r = jensen_gap(move |u| psi(u), |s| s.db().iter().sum::<f64>().powi(2) / 10.0, &e).unwrap();
    assert!(r.holds, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ensembles_are_reproducible(seed in any::<u64>(), m in 1usize..20) {
        let p = problem("geometric", &[], 16, 1.0, 2.0);
        let a = direct_solve_ensemble(&p, &ensemble(&p, 2, 2, m, seed)).unwrap();
        let b = direct_solve_ensemble(&p, &ensemble(&p, 2, 2, m, seed)).unwrap();
        prop_assert_eq!(a.paths, b.paths);
    }

    #[test]
    fn upper_dominates_every_control_mean(seed in any::<u64>(), k in 0.1f64..3.0) {
        let p = problem("zero", &[], 8, 0.5, 1.5);
        let e = ensemble(&p, 3, 2, 30, seed);
        let est = estimate(&e, |s| (k * s.db().iter().sum::<f64>()).cos()).unwrap();
        prop_assert!(est.per_control.iter().all(|c| c.mean <= est.value));
    }
}
