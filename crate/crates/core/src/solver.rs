//! Left-endpoint discretisation of
//! `X(t) = phi(t) + int_0^t b(t,s,X) ds + int_0^t h(t,s,X) d<B> + int_0^t sigma(t,s,X) dB`
//! and two ways of solving it on each scenario: the forward recursion, which
//! is the exact fixed point of the discrete map, and Picard iteration with
//! full-path sweeps.
//!
//! Both evaluate the right-hand side at `t_i` as
//! `phi(t_i) + sum_{j<i} [b dt + h d<B>_j + sigma dB_j]` with the kernels taken
//! at `(t_i, t_j, X(t_j))`, accumulating the sum in increasing `j`. When the
//! family declares its kernels free of the outer time, the sum for `t_i`
//! extends the one for `t_{i-1}` by one term, so running sums give bit-identical
//! results in O(N) per sweep.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::{CoefficientFamily, HypothesisMetadata};
use crate::error::{Error, Result};
use crate::expectation::{AdaptedProcess, Estimate, Extremum};
use crate::numeric::exact_mean;
use crate::scenario::{Ensemble, GParams, Scenario, TimeGrid};

#[derive(Debug, Clone)]
pub struct VolterraProblem {
    family: Arc<CoefficientFamily>,
    metadata: Arc<HypothesisMetadata>,
    grid: TimeGrid,
    params: GParams,
    alpha: f64,
    running_sums: bool,
}

impl VolterraProblem {
    pub fn new(
        family: CoefficientFamily,
        metadata: HypothesisMetadata,
        grid: TimeGrid,
        params: GParams,
    ) -> Self {
        Self {
            family: Arc::new(family),
            metadata: Arc::new(metadata),
            grid,
            params,
            alpha: 0.0,
            running_sums: true,
        }
    }

    /// Same problem at parameter value `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }

    /// Disables the running-sum shortcut for outer-time-free families, forcing
    /// the O(N^2) recomputation (used to cross-check the shortcut).
    pub fn with_running_sums(mut self, enabled: bool) -> Self {
        self.running_sums = enabled;
        self
    }

    pub fn family(&self) -> &CoefficientFamily {
        &self.family
    }

    pub fn metadata(&self) -> &HypothesisMetadata {
        &self.metadata
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn params(&self) -> &GParams {
        &self.params
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn uses_running_sums(&self) -> bool {
        self.running_sums && self.family.is_outer_time_free()
    }

    pub fn phi(&self, i: usize) -> f64 {
        self.family.phi(self.grid.time(i), self.alpha)
    }

    fn check_ensemble(&self, ensemble: &Ensemble) -> Result<()> {
        if ensemble.grid() != &self.grid || ensemble.params() != &self.params {
            return Err(Error::InvalidArgument(
                "problem grid and volatility band must match the ensemble".into(),
            ));
        }
        Ok(())
    }

    fn check_path(&self, x: &[f64], needed: usize) -> Result<()> {
        if x.len() < needed {
            return Err(Error::LengthMismatch {
                what: "solution path vs required points",
                expected: needed,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// `(drift part, diffusion part)` of the summand for `(t_i, t_j)`.
    fn parts(&self, scenario: &Scenario, i: usize, j: usize, x: f64) -> Result<(f64, f64)> {
        let (t, s, a) = (self.grid.time(i), self.grid.time(j), self.alpha);
        let eval = |f: &crate::coefficients::Kernel| -> Result<f64> {
            let v = f(t, s, x, a);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteCoefficient { i, j, x, value: v })
            }
        };
        let mut drift = 0.0;
        if let Some(b) = self.family.b_kernel() {
            drift += eval(b)? * self.grid.dt();
        }
        if let Some(h) = self.family.h_kernel() {
            drift += eval(h)? * scenario.dqv()[j];
        }
        let diffusion = match self.family.sigma_kernel() {
            Some(sig) => eval(sig)? * scenario.db()[j],
            None => 0.0,
        };
        Ok((drift, diffusion))
    }

    fn term(&self, scenario: &Scenario, i: usize, j: usize, x: f64) -> Result<f64> {
        let (d, m) = self.parts(scenario, i, j, x)?;
        Ok(d + m)
    }

    /// `phi(t_i) + sum_{j<i} [b dt + h d<B>_j + sigma dB_j]`, reading only
    /// `x[..i]`.
    pub fn rhs_eval(&self, x: &[f64], scenario: &Scenario, i: usize) -> Result<f64> {
        self.check_path(x, i)?;
        let mut acc = 0.0;
        for (j, &xj) in x[..i].iter().enumerate() {
            acc += self.term(scenario, i, j, xj)?;
        }
        Ok(self.phi(i) + acc)
    }

    /// Forward recursion `X(t_i) = rhs_eval(X, i)`.
    pub fn direct_solve(&self, scenario: &Scenario) -> Result<Vec<f64>> {
        let n = self.grid.steps();
        let mut x = Vec::with_capacity(n + 1);
        if self.uses_running_sums() {
            let mut acc = 0.0;
            x.push(self.phi(0) + acc);
            for i in 1..=n {
                acc += self.term(scenario, i, i - 1, x[i - 1])?;
                x.push(self.phi(i) + acc);
            }
        } else {
            for i in 0..=n {
                let v = self.rhs_eval(&x, scenario, i)?;
                x.push(v);
            }
        }
        Ok(x)
    }

    /// One full-path Picard sweep `next(t_i) = rhs_eval(prev, i)` for every
    /// `i`. Entries below `settled` are known to be unchanged and are copied.
    fn sweep(&self, prev: &[f64], scenario: &Scenario, settled: usize) -> Result<Vec<f64>> {
        let n = self.grid.steps();
        self.check_path(prev, n + 1)?;
        let mut next = Vec::with_capacity(n + 1);
        if self.uses_running_sums() {
            let mut acc = 0.0;
            next.push(self.phi(0) + acc);
            for i in 1..=n {
                acc += self.term(scenario, i, i - 1, prev[i - 1])?;
                next.push(self.phi(i) + acc);
            }
        } else {
            next.extend_from_slice(&prev[..settled.min(n + 1)]);
            for i in next.len()..=n {
                next.push(self.rhs_eval(prev, scenario, i)?);
            }
        }
        Ok(next)
    }

    /// Stochastic and drift integral processes of a path:
    /// `M(t_i) = sum_{j<i} sigma(t_i, t_j, X_j) dB_j` and
    /// `N(t_i) = sum_{j<i} [b dt + h d<B>_j]`.
    pub fn integral_processes(&self, x: &[f64], scenario: &Scenario) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.grid.steps();
        self.check_path(x, n + 1)?;
        let mut m = vec![0.0; n + 1];
        let mut d = vec![0.0; n + 1];
        if self.uses_running_sums() {
            for i in 1..=n {
                let (dd, mm) = self.parts(scenario, i, i - 1, x[i - 1])?;
                d[i] = d[i - 1] + dd;
                m[i] = m[i - 1] + mm;
            }
        } else {
            for i in 1..=n {
                let (mut da, mut ma) = (0.0, 0.0);
                for (j, &xj) in x[..i].iter().enumerate() {
                    let (dd, mm) = self.parts(scenario, i, j, xj)?;
                    da += dd;
                    ma += mm;
                }
                d[i] = da;
                m[i] = ma;
            }
        }
        Ok((m, d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Direct,
    Picard,
}

/// Initial iterate of the Picard scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PicardStart {
    /// `X_0 = phi`
    Forcing,
    /// `X_0 = phi + c`
    Offset(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub start: PicardStart,
}

impl PicardOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            start: PicardStart::Forcing,
        }
    }

    /// Defaults for problems without noise (`tol = 1e-10`).
    pub fn deterministic(max_iter: usize) -> Self {
        Self::new(1e-10, max_iter)
    }

    /// Defaults for stochastic problems (`tol = 1e-6`).
    pub fn stochastic(max_iter: usize) -> Self {
        Self::new(1e-6, max_iter)
    }

    pub fn starting_at(mut self, start: PicardStart) -> Self {
        self.start = start;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SolverChoice {
    Direct,
    Picard(PicardOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardReport {
    /// `d_n = max_i E^[|X_{n+1}(t_i) - X_n(t_i)|^2]`, `n = 0, 1, ...`
    pub increments: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionEnsemble {
    pub paths: AdaptedProcess,
    pub solver: SolverKind,
    pub family: String,
    pub alpha: f64,
}

pub fn direct_solve_ensemble(problem: &VolterraProblem, ensemble: &Ensemble) -> Result<SolutionEnsemble> {
    problem.check_ensemble(ensemble)?;
    let paths = ensemble.try_map_scenarios(|s| problem.direct_solve(s))?;
    Ok(SolutionEnsemble {
        paths: AdaptedProcess::from_paths(problem.grid.steps(), paths)?,
        solver: SolverKind::Direct,
        family: problem.family.name().to_string(),
        alpha: problem.alpha,
    })
}

/// Picard iteration on every scenario until `d_n <= tol` or `max_iter`
/// sweeps. Non-convergence is reported, not raised.
pub fn picard_solve(
    problem: &VolterraProblem,
    ensemble: &Ensemble,
    opts: &PicardOptions,
) -> Result<(SolutionEnsemble, PicardReport)> {
    problem.check_ensemble(ensemble)?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument(
            "Picard needs tol > 0 and max_iter >= 1".into(),
        ));
    }
    let n = problem.grid.steps();
    let offset = match opts.start {
        PicardStart::Forcing => 0.0,
        PicardStart::Offset(c) => c,
    };
    let mut paths: Vec<Vec<f64>> = (0..ensemble.len())
        .map(|_| (0..=n).map(|i| problem.phi(i) + offset).collect())
        .collect();
    let m = ensemble.replicas();
    let mut increments = Vec::new();
    let mut converged = false;
    for sweep in 0..opts.max_iter {
        // X_sweep(t_i) is final for i < sweep
        let next = paths
            .par_iter()
            .enumerate()
            .map(|(k, prev)| problem.sweep(prev, &ensemble.scenario(k), sweep))
            .collect::<Result<Vec<_>>>()?;
        let d = (0..=n)
            .into_par_iter()
            .map(|i| {
                let sq: Vec<f64> = next
                    .iter()
                    .zip(&paths)
                    .map(|(a, b)| (a[i] - b[i]) * (a[i] - b[i]))
                    .collect();
                sq.chunks_exact(m).map(exact_mean).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        paths = next;
        increments.push(d);
        if d <= opts.tol {
            converged = true;
            break;
        }
    }
    let iterations = increments.len();
    Ok((
        SolutionEnsemble {
            paths: AdaptedProcess::from_paths(n, paths)?,
            solver: SolverKind::Picard,
            family: problem.family.name().to_string(),
            alpha: problem.alpha,
        },
        PicardReport {
            increments,
            iterations,
            converged,
            tol: opts.tol,
        },
    ))
}

pub fn solve(
    problem: &VolterraProblem,
    ensemble: &Ensemble,
    choice: &SolverChoice,
) -> Result<(SolutionEnsemble, Option<PicardReport>)> {
    match choice {
        SolverChoice::Direct => Ok((direct_solve_ensemble(problem, ensemble)?, None)),
        SolverChoice::Picard(opts) => {
            let (sol, report) = picard_solve(problem, ensemble, opts)?;
            Ok((sol, Some(report)))
        }
    }
}

/// Solves on every scenario, then estimates `payoff(path, scenario)`.
pub fn solve_expect<F>(
    problem: &VolterraProblem,
    ensemble: &Ensemble,
    payoff: F,
    choice: &SolverChoice,
) -> Result<Estimate>
where
    F: Fn(&[f64], &Scenario) -> f64 + Sync + Send,
{
    let (solution, _) = solve(problem, ensemble, choice)?;
    let values: Vec<f64> = (0..ensemble.len())
        .into_par_iter()
        .map(|k| payoff(solution.paths.path(k), &ensemble.scenario(k)))
        .collect();
    Estimate::from_values(ensemble, &values, Extremum::Sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityRow {
    pub t0: f64,
    pub t1: f64,
    pub value: f64,
    pub std_error: f64,
}

/// `E^[|X(t_{i+1}) - X(t_i)|^2]` for every adjacent pair of grid points.
pub fn msq_continuity_profile(
    solution: &SolutionEnsemble,
    ensemble: &Ensemble,
) -> Result<Vec<ContinuityRow>> {
    let x = &solution.paths;
    if x.steps() != ensemble.grid().steps() || x.scenarios() != ensemble.len() {
        return Err(Error::LengthMismatch {
            what: "solution scenarios vs ensemble",
            expected: ensemble.len(),
            actual: x.scenarios(),
        });
    }
    let times = ensemble.grid().times();
    (0..x.steps())
        .into_par_iter()
        .map(|i| {
            let v: Vec<f64> = (0..x.scenarios())
                .map(|k| (x.value(k, i + 1) - x.value(k, i)).powi(2))
                .collect();
            let e = Estimate::from_values(ensemble, &v, Extremum::Sup)?;
            Ok(ContinuityRow {
                t0: times[i],
                t1: times[i + 1],
                value: e.value,
                std_error: e.std_error(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{builtin_family, FamilyParams};
    use crate::expectation::adaptedness_probe;
    use crate::scenario::{build_control_lattice, LatticeSpec, VolatilityControl};
    use proptest::prelude::*;

    fn problem(name: &str, horizon: f64, steps: usize, low: f64, high: f64) -> VolterraProblem {
        let (f, m) = builtin_family(name, &FamilyParams::new()).unwrap();
        VolterraProblem::new(
            f,
            m,
            TimeGrid::new(horizon, steps).unwrap(),
            GParams::new(low, high).unwrap(),
        )
    }

    fn ensemble_for(p: &VolterraProblem, levels: usize, m: usize, seed: u64) -> Ensemble {
        let controls = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(levels, 1)).unwrap();
        Ensemble::generate(*p.params(), p.grid().clone(), controls, m, seed).unwrap()
    }

    fn quiet(p: &VolterraProblem) -> Scenario {
        let c = VolatilityControl::constant(p.params().var_low(), p.grid(), p.params()).unwrap();
        crate::scenario::simulate_scenario(&c, p.grid(), 0, 0).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let p = problem("zero", 1.0, 10, 1.0, 1.0);
        let s = quiet(&p);
        let x = vec![5.0; 11];
        for i in 0..=10 {
            assert_eq!(p.rhs_eval(&x, &s, i).unwrap(), p.phi(i));
        }
        let p = problem("linear_ode", 1.0, 10, 1.0, 1.0);
        let x: Vec<f64> = (0..=10).map(|i| i as f64 * 0.3).collect();
        assert_eq!(p.rhs_eval(&x, &s, 0).unwrap(), 1.0);
        let mut oracle = 0.0;
        for &xj in &x[..7] {
            oracle += xj * 0.1;
        }
        assert_eq!(p.rhs_eval(&x, &s, 7).unwrap(), 1.0 + oracle);
    }

    #[test]
    fn classical_deterministic_reductions() {
        let p = problem("linear_ode", 1.0, 2000, 1.0, 1.0);
        let x = p.direct_solve(&quiet(&p)).unwrap();
        assert!((x[2000] - std::f64::consts::E).abs() <= 5e-3);
        // exact discrete oracle: (1 + dt)^N
        assert!((x[2000] - 1.0005f64.powi(2000)).abs() < 1e-10);

        let p = problem("conv_cosh", 1.0, 2000, 1.0, 1.0);
        let x = p.direct_solve(&quiet(&p)).unwrap();
        assert!((x[2000] - 1f64.cosh()).abs() <= 5e-3, "{}", x[2000]);

        let p = problem("zero", 1.0, 50, 1.0, 1.0);
        let x = p.direct_solve(&quiet(&p)).unwrap();
        assert!(x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn running_sums_match_quadratic_path_bitwise() {
        for name in ["linear_ode", "geometric", "log_modulus"] {
            let fast = problem(name, 1.0, 64, 1.0, 2.0);
            let slow = fast.clone().with_running_sums(false);
            let e = ensemble_for(&fast, 2, 3, 4);
            for k in 0..e.len() {
                let s = e.scenario(k);
                let a = fast.direct_solve(&s).unwrap();
                let b = slow.direct_solve(&s).unwrap();
                assert_eq!(
                    a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    b.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    "{name}"
                );
            }
        }
    }

    #[test]
    fn picard_reaches_direct_solution_exactly() {
        for name in ["linear_ode", "conv_cosh", "geometric", "singular_kernel"] {
            let p = problem(name, 1.0, 40, 1.0, 2.0);
            let e = ensemble_for(&p, 2, 4, 9);
            let opts = PicardOptions::new(f64::MIN_POSITIVE, 41);
            let (sol, rep) = picard_solve(&p, &e, &opts).unwrap();
            let direct = direct_solve_ensemble(&p, &e).unwrap();
            assert_eq!(sol.paths, direct.paths, "{name}");
            assert!(rep.converged && rep.iterations <= 41, "{name}: {rep:?}");
        }
    }

    #[test]
    fn zero_family_converges_immediately() {
        let p = problem("zero", 1.0, 20, 1.0, 2.0);
        let e = ensemble_for(&p, 2, 3, 1);
        let (_, rep) = picard_solve(&p, &e, &PicardOptions::deterministic(10)).unwrap();
        assert_eq!(rep.increments, vec![0.0]);
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = problem("linear_ode", 1.0, 100, 1.0, 1.0);
        let e = ensemble_for(&p, 2, 1, 1);
        let (_, rep) = picard_solve(&p, &e, &PicardOptions::deterministic(3)).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
        assert!(rep.increments.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn picard_increments_are_binomial_for_linear_ode() {
        // discrete oracle: X_{n+1} - X_n at t_N equals C(N, n+1) dt^{n+1}
        let n_steps = 50;
        let p = problem("linear_ode", 1.0, n_steps, 1.0, 1.0);
        let e = ensemble_for(&p, 2, 1, 1);
        let (_, rep) = picard_solve(&p, &e, &PicardOptions::new(1e-30, 8)).unwrap();
        let dt = 1.0 / n_steps as f64;
        let mut binom = 1.0;
        for (n, &d) in rep.increments.iter().enumerate() {
            binom *= (n_steps - n) as f64 / (n + 1) as f64;
            let oracle = (binom * dt.powi(n as i32 + 1)).powi(2);
            assert!((d - oracle).abs() <= 1e-9 * oracle, "n={n}: {d} vs {oracle}");
        }
    }

    #[test]
    fn geometric_classical_second_moment() {
        let p = problem("geometric", 1.0, 200, 1.0, 1.0);
        let e = ensemble_for(&p, 2, 4000, 3);
        let est = solve_expect(&p, &e, |x, _| x[200] * x[200], &SolverChoice::Direct).unwrap();
        // discrete oracle (1 + dt)^N
        let oracle = 1.005f64.powi(200);
        assert!((est.value - oracle).abs() <= 3.0 * est.std_error(), "{est:?}");
    }

    #[test]
    fn zero_family_expectation_is_forcing() {
        let p = problem("zero", 1.0, 20, 1.0, 2.0);
        let e = ensemble_for(&p, 2, 10, 2);
        let est = solve_expect(&p, &e, |x, _| x[20], &SolverChoice::Direct).unwrap();
        assert_eq!(est.value, 1.0);
    }

    #[test]
    fn continuity_profile_examples() {
        let p = problem("linear_ode", 1.0, 100, 1.0, 1.0);
        let e = ensemble_for(&p, 2, 1, 1);
        let sol = direct_solve_ensemble(&p, &e).unwrap();
        let prof = msq_continuity_profile(&sol, &e).unwrap();
        assert_eq!(prof.len(), 100);
        // X_{i+1} - X_i = dt X_i exactly in the scheme
        let x = sol.paths.path(0);
        for (i, row) in prof.iter().enumerate() {
            assert!((row.value - (0.01 * x[i]).powi(2)).abs() < 1e-15);
        }

        let p = problem("zero", 1.0, 100, 1.0, 1.0);
        let e = ensemble_for(&p, 2, 1, 1);
        let sol = direct_solve_ensemble(&p, &e).unwrap();
        assert!(msq_continuity_profile(&sol, &e).unwrap().iter().all(|r| r.value == 0.0));
    }

    #[test]
    fn solutions_are_adapted() {
        let p = problem("singular_kernel", 1.0, 12, 1.0, 2.0);
        let controls = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(2, 2)).unwrap();
        let e = Ensemble::branching(*p.params(), p.grid().clone(), controls, 3, &[0, 4, 8, 12]).unwrap();
        let sol = direct_solve_ensemble(&p, &e).unwrap();
        for i in 0..=12 {
            assert!(adaptedness_probe(&sol.paths, &e, i).unwrap());
        }
        assert!((0..e.len()).all(|k| sol.paths.value(k, 0) == 1.0));
    }

    #[test]
    fn mismatched_ensemble_is_rejected() {
        let p = problem("zero", 1.0, 20, 1.0, 2.0);
        let q = problem("zero", 1.0, 21, 1.0, 2.0);
        let e = ensemble_for(&q, 2, 2, 1);
        assert!(direct_solve_ensemble(&p, &e).is_err());
    }

    #[test]
    fn non_finite_coefficient_is_located() {
        let (_, m) = builtin_family("zero", &FamilyParams::new()).unwrap();
        let f = CoefficientFamily::new("blowup")
            .with_b(|_, _, x, _| if x > 2.0 { f64::INFINITY } else { x })
            .with_phi(|_, _| 1.0);
        let p = VolterraProblem::new(f, m, TimeGrid::new(1.0, 200).unwrap(), GParams::new(1.0, 1.0).unwrap());
        let err = p.direct_solve(&quiet(&p)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteCoefficient { .. }), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn uniqueness_from_shifted_start(seed in 0u64..1000) {
            let p = problem("geometric", 1.0, 30, 1.0, 2.0);
            let e = ensemble_for(&p, 2, 8, seed);
            let base = PicardOptions::new(1e-12, 200);
            let (a, _) = picard_solve(&p, &e, &base).unwrap();
            let (b, rep) = picard_solve(&p, &e, &base.starting_at(PicardStart::Offset(1.0))).unwrap();
            prop_assert!(rep.converged);
            let d = crate::expectation::sup_msq_distance(&a.paths, &b.paths, &e).unwrap();
            prop_assert!(d <= 1e-10, "{}", d);
        }

        #[test]
        fn worst_case_never_drops_under_refinement(seed in 0u64..1000) {
            let p = problem("geometric", 1.0, 16, 0.5, 1.5);
            let coarse = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(2, 1)).unwrap();
            let fine = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(3, 2)).unwrap();
            let payoff = |x: &[f64], _: &Scenario| (x[8] - 1.0).abs() + x[16] * x[16];
            let a = solve_expect(&p, &Ensemble::generate(*p.params(), p.grid().clone(), coarse, 12, seed).unwrap(), payoff, &SolverChoice::Direct).unwrap();
            let b = solve_expect(&p, &Ensemble::generate(*p.params(), p.grid().clone(), fine, 12, seed).unwrap(), payoff, &SolverChoice::Direct).unwrap();
            prop_assert!(a.value <= b.value);
        }
    }
}
