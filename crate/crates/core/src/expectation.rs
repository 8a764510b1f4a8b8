//! Sublinear expectation over an ensemble: per-control Monte Carlo means and
//! their maximum (or minimum for the conjugate lower expectation), discrete
//! Itô integrals, norms and the isometry / Doob reports.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{mean_and_std_error, ExactSum};
use crate::scenario::{Ensemble, Scenario};

/// Default statistical tolerance multiplier for expectation-level contracts.
pub const DEFAULT_SE_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlMean {
    pub control: usize,
    pub mean: f64,
    pub std_error: f64,
    pub replicas: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Sup,
    Inf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub kind: Extremum,
    pub per_control: Vec<ControlMean>,
    /// Control attaining `value` (lowest index on ties).
    pub extremal_control: usize,
}

impl Estimate {
    pub fn std_error(&self) -> f64 {
        self.per_control[self.extremal_control].std_error
    }

    /// Aggregates precomputed per-scenario values laid out in ensemble order.
    pub fn from_values(ensemble: &Ensemble, values: &[f64], kind: Extremum) -> Result<Self> {
        if values.len() != ensemble.len() {
            return Err(Error::LengthMismatch {
                what: "payoff values vs ensemble scenarios",
                expected: ensemble.len(),
                actual: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let key = ensemble.key(k);
            return Err(Error::NonFinitePayoff {
                control: key.control,
                replica: key.replica,
                value: values[k],
            });
        }
        let m = ensemble.replicas();
        let per_control: Vec<ControlMean> = values
            .chunks_exact(m)
            .enumerate()
            .map(|(control, chunk)| {
                let (mean, std_error) = mean_and_std_error(chunk);
                ControlMean {
                    control,
                    mean,
                    std_error,
                    replicas: m,
                }
            })
            .collect();
        let mut best = 0;
        for (c, pc) in per_control.iter().enumerate() {
            let better = match kind {
                Extremum::Sup => pc.mean > per_control[best].mean,
                Extremum::Inf => pc.mean < per_control[best].mean,
            };
            if better {
                best = c;
            }
        }
        Ok(Self {
            value: per_control[best].mean,
            kind,
            per_control,
            extremal_control: best,
        })
    }
}

/// `E^[payoff]`: the largest per-control mean.
pub fn estimate<F>(ensemble: &Ensemble, payoff: F) -> Result<Estimate>
where
    F: Fn(&Scenario) -> f64 + Sync + Send,
{
    let values = ensemble.map_scenarios(payoff);
    Estimate::from_values(ensemble, &values, Extremum::Sup)
}

/// `-E^[-payoff]`: the smallest per-control mean.
pub fn lower_expectation<F>(ensemble: &Ensemble, payoff: F) -> Result<Estimate>
where
    F: Fn(&Scenario) -> f64 + Sync + Send,
{
    let values = ensemble.map_scenarios(payoff);
    Estimate::from_values(ensemble, &values, Extremum::Inf)
}

/// Per-scenario paths `X(t_i)`, `i = 0..=N`, in ensemble scenario order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    stride: usize,
    values: Vec<f64>,
}

impl AdaptedProcess {
    /// `values` holds consecutive paths of length `steps + 1`.
    pub fn new(steps: usize, values: Vec<f64>) -> Result<Self> {
        let stride = steps + 1;
        if values.len() % stride != 0 {
            return Err(Error::LengthMismatch {
                what: "process values vs path length",
                expected: stride * (values.len() / stride + 1),
                actual: values.len(),
            });
        }
        Ok(Self { stride, values })
    }

    pub fn from_paths(steps: usize, paths: Vec<Vec<f64>>) -> Result<Self> {
        let mut values = Vec::with_capacity(paths.len() * (steps + 1));
        for p in paths {
            if p.len() != steps + 1 {
                return Err(Error::LengthMismatch {
                    what: "path length vs grid points",
                    expected: steps + 1,
                    actual: p.len(),
                });
            }
            values.extend(p);
        }
        Self::new(steps, values)
    }

    /// Builds one path per scenario with `f`, in parallel.
    pub fn from_fn<F>(ensemble: &Ensemble, f: F) -> Result<Self>
    where
        F: Fn(&Scenario) -> Vec<f64> + Sync + Send,
    {
        Self::from_paths(ensemble.grid().steps(), ensemble.map_scenarios(f))
    }

    pub fn constant(ensemble: &Ensemble, c: f64) -> Self {
        let stride = ensemble.grid().steps() + 1;
        Self {
            stride,
            values: vec![c; stride * ensemble.len()],
        }
    }

    /// The G-Brownian path `B(t_i)` of every scenario.
    pub fn driver(ensemble: &Ensemble) -> Self {
        Self::from_fn(ensemble, Scenario::driver_path).expect("driver paths match the grid")
    }

    pub fn steps(&self) -> usize {
        self.stride - 1
    }

    pub fn scenarios(&self) -> usize {
        self.values.len() / self.stride
    }

    pub fn path(&self, scenario: usize) -> &[f64] {
        &self.values[scenario * self.stride..(scenario + 1) * self.stride]
    }

    pub fn value(&self, scenario: usize, i: usize) -> f64 {
        self.values[scenario * self.stride + i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            stride: self.stride,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Values at time index `i` across all scenarios.
    pub fn slice_at(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.stride).copied().collect()
    }

    pub(crate) fn check_ensemble(&self, ensemble: &Ensemble) -> Result<()> {
        if self.steps() != ensemble.grid().steps() || self.scenarios() != ensemble.len() {
            return Err(Error::LengthMismatch {
                what: "process scenarios x points vs ensemble",
                expected: ensemble.len() * (ensemble.grid().steps() + 1),
                actual: self.values.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `dB`
    Driver,
    /// `d<B>`
    QuadraticVariation,
    /// `dt`
    Time,
}

/// Left-endpoint sums `I(t_i) = sum_{j<i} eta(t_j) * increment_j`, `I(0) = 0`.
pub fn stochastic_integral(
    integrand: &[f64],
    scenario: &Scenario,
    mode: Integrator,
) -> Result<Vec<f64>> {
    let n = scenario.steps();
    if integrand.len() != n + 1 {
        return Err(Error::LengthMismatch {
            what: "integrand vs grid points",
            expected: n + 1,
            actual: integrand.len(),
        });
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for j in 0..n {
        let d = match mode {
            Integrator::Driver => scenario.db()[j],
            Integrator::QuadraticVariation => scenario.dqv()[j],
            Integrator::Time => scenario.dt(),
        };
        acc += integrand[j] * d;
        out.push(acc);
    }
    Ok(out)
}

/// `E^[|X(t_i) - Y(t_i)|^2]` for every grid index.
pub fn msq_distance_profile(
    x: &AdaptedProcess,
    y: &AdaptedProcess,
    ensemble: &Ensemble,
) -> Result<Vec<Estimate>> {
    x.check_ensemble(ensemble)?;
    y.check_ensemble(ensemble)?;
    (0..=x.steps())
        .into_par_iter()
        .map(|i| {
            let values: Vec<f64> = (0..ensemble.len())
                .map(|k| {
                    let d = x.value(k, i) - y.value(k, i);
                    d * d
                })
                .collect();
            Estimate::from_values(ensemble, &values, Extremum::Sup)
        })
        .collect()
}

/// `max_i E^[|X(t_i) - Y(t_i)|^2]`.
pub fn sup_msq_distance(x: &AdaptedProcess, y: &AdaptedProcess, ensemble: &Ensemble) -> Result<f64> {
    Ok(msq_distance_profile(x, y, ensemble)?
        .iter()
        .map(|e| e.value)
        .fold(0.0, f64::max))
}

fn time_integral_pow(path: &[f64], p: f64, dt: f64) -> f64 {
    let mut acc = ExactSum::new();
    for &v in &path[..path.len() - 1] {
        acc.add(v.abs().powf(p));
    }
    acc.value() * dt
}

/// `(E^[int_0^T |X(t)|^p dt])^{1/p}` with left-endpoint time quadrature.
pub fn mg_norm(x: &AdaptedProcess, p: f64, ensemble: &Ensemble) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("norm exponent must be >= 1, got {p}")));
    }
    x.check_ensemble(ensemble)?;
    let dt = ensemble.grid().dt();
    let values: Vec<f64> = (0..ensemble.len())
        .into_par_iter()
        .map(|k| time_integral_pow(x.path(k), p, dt))
        .collect();
    let e = Estimate::from_values(ensemble, &values, Extremum::Sup)?;
    Ok(e.value.powf(1.0 / p))
}

/// A value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Measured {
    pub value: f64,
    pub std_error: f64,
}

impl From<&Estimate> for Measured {
    fn from(e: &Estimate) -> Self {
        Self {
            value: e.value,
            std_error: e.std_error(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsometryReport {
    /// `E^[|int eta dB|^2]`
    pub lhs: Measured,
    /// `E^[int eta^2 d<B>]`
    pub mid: Measured,
    /// `sigma_high^2 E^[int eta^2 dt]`
    pub rhs: Measured,
    pub lhs_matches_mid: bool,
    pub mid_within_rhs: bool,
}

fn combined(a: Measured, b: Measured) -> f64 {
    (a.std_error * a.std_error + b.std_error * b.std_error).sqrt()
}

fn check_integrand(eta: &AdaptedProcess, ensemble: &Ensemble) -> Result<()> {
    eta.check_ensemble(ensemble)
}

struct IntegralSample {
    terminal_sq: f64,
    sup_sq: f64,
    eta_sq_dqv: f64,
    eta_sq_dt: f64,
}

fn integral_samples(eta: &AdaptedProcess, ensemble: &Ensemble) -> Result<Vec<IntegralSample>> {
    check_integrand(eta, ensemble)?;
    ensemble.try_map_scenarios(|s| {
        let k = ensemble.index(s.key().control, s.key().replica);
        let path = eta.path(k);
        let sq: Vec<f64> = path.iter().map(|v| v * v).collect();
        let m = stochastic_integral(path, s, Integrator::Driver)?;
        let qv = stochastic_integral(&sq, s, Integrator::QuadraticVariation)?;
        let tt = stochastic_integral(&sq, s, Integrator::Time)?;
        let terminal = *m.last().unwrap();
        Ok(IntegralSample {
            terminal_sq: terminal * terminal,
            sup_sq: m.iter().map(|v| v * v).fold(0.0, f64::max),
            eta_sq_dqv: *qv.last().unwrap(),
            eta_sq_dt: *tt.last().unwrap(),
        })
    })
}

pub fn ito_isometry_report(eta: &AdaptedProcess, ensemble: &Ensemble) -> Result<IsometryReport> {
    let samples = integral_samples(eta, ensemble)?;
    let est = |f: fn(&IntegralSample) -> f64| {
        let v: Vec<f64> = samples.iter().map(f).collect();
        Estimate::from_values(ensemble, &v, Extremum::Sup)
    };
    let lhs = Measured::from(&est(|s| s.terminal_sq)?);
    let mid = Measured::from(&est(|s| s.eta_sq_dqv)?);
    let dt_part = est(|s| s.eta_sq_dt)?;
    let v2 = ensemble.params().var_high();
    let rhs = Measured {
        value: v2 * dt_part.value,
        std_error: v2 * dt_part.std_error(),
    };
    let k = DEFAULT_SE_MULTIPLIER;
    Ok(IsometryReport {
        lhs,
        mid,
        rhs,
        lhs_matches_mid: (lhs.value - mid.value).abs() <= k * combined(lhs, mid),
        mid_within_rhs: mid.value <= rhs.value + k * combined(mid, rhs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaximalReport {
    /// `E^[max_i |int_0^{t_i} eta dB|^2]`
    pub sup_moment: Measured,
    /// `4 sigma_high^2 E^[int eta^2 dt]`
    pub doob_bound: Measured,
    pub holds: bool,
}

pub fn maximal_inequality_report(eta: &AdaptedProcess, ensemble: &Ensemble) -> Result<MaximalReport> {
    let samples = integral_samples(eta, ensemble)?;
    let sup: Vec<f64> = samples.iter().map(|s| s.sup_sq).collect();
    let norm: Vec<f64> = samples.iter().map(|s| s.eta_sq_dt).collect();
    let sup_moment = Measured::from(&Estimate::from_values(ensemble, &sup, Extremum::Sup)?);
    let n = Estimate::from_values(ensemble, &norm, Extremum::Sup)?;
    let factor = 4.0 * ensemble.params().var_high();
    let doob_bound = Measured {
        value: factor * n.value,
        std_error: factor * n.std_error(),
    };
    Ok(MaximalReport {
        sup_moment,
        doob_bound,
        holds: sup_moment.value
            <= doob_bound.value + DEFAULT_SE_MULTIPLIER * combined(sup_moment, doob_bound),
    })
}

/// True iff `X(t_i)` agrees bitwise across all scenarios sharing the same
/// control densities and noise on intervals `0..i`.
pub fn adaptedness_probe(x: &AdaptedProcess, ensemble: &Ensemble, i: usize) -> Result<bool> {
    x.check_ensemble(ensemble)?;
    if i > x.steps() {
        return Err(Error::InvalidArgument(format!(
            "time index {i} beyond {} steps",
            x.steps()
        )));
    }
    let mut seen: HashMap<Vec<u64>, u64> = HashMap::new();
    for k in 0..ensemble.len() {
        let key = ensemble.key(k);
        let control = &ensemble.controls()[key.control];
        let noise = ensemble.noise(key.replica);
        let prefix: Vec<u64> = control.densities()[..i]
            .iter()
            .chain(&noise[..i])
            .map(|v| v.to_bits())
            .collect();
        let v = x.value(k, i).to_bits();
        if *seen.entry(prefix).or_insert(v) != v {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_control_lattice, GParams, LatticeSpec, TimeGrid, VolatilityControl};
    use proptest::prelude::*;

    fn ensemble(low: f64, high: f64, steps: usize, m: usize, seed: u64) -> Ensemble {
        let p = GParams::new(low, high).unwrap();
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let controls = build_control_lattice(&p, &grid, LatticeSpec::new(2, 1)).unwrap();
        Ensemble::generate(p, grid, controls, m, seed).unwrap()
    }

    fn terminal_b(s: &Scenario) -> f64 {
        s.db().iter().sum()
    }

    #[test]
    fn constants_are_preserved_exactly() {
        let e = ensemble(1.0, 2.0, 10, 37, 1);
        let est = estimate(&e, |_| 3.5).unwrap();
        assert_eq!(est.value, 3.5);
        assert!(est.per_control.iter().all(|c| c.mean == 3.5 && c.std_error == 0.0));
        assert_eq!(lower_expectation(&e, |_| 3.5).unwrap().value, 3.5);
    }

    #[test]
    fn driver_terminal_is_centred() {
        let e = ensemble(1.0, 2.0, 20, 4000, 2);
        let est = estimate(&e, terminal_b).unwrap();
        assert!(est.value.abs() <= 3.0 * est.std_error(), "{est:?}");
    }

    #[test]
    fn squared_driver_hits_band_ends() {
        let e = ensemble(1.0, 2.0, 20, 4000, 3);
        let up = estimate(&e, |s| terminal_b(s).powi(2)).unwrap();
        let lo = lower_expectation(&e, |s| terminal_b(s).powi(2)).unwrap();
        assert!((up.value - 4.0).abs() <= 3.0 * up.std_error(), "{up:?}");
        assert!((lo.value - 1.0).abs() <= 3.0 * lo.std_error(), "{lo:?}");
        assert_eq!(up.extremal_control, 1);
        assert_eq!(lo.extremal_control, 0);
        assert!(lo.value <= up.value);
    }

    #[test]
    fn non_finite_payoff_names_the_scenario() {
        let e = ensemble(1.0, 2.0, 4, 3, 4);
        let err = estimate(&e, |s| {
            if s.key().control == 1 && s.key().replica == 2 {
                f64::NAN
            } else {
                0.0
            }
        })
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NonFinitePayoff {
                control: 1,
                replica: 2,
                ..
            }
        ));
    }

    #[test]
    fn integral_examples() {
        let e = ensemble(1.0, 2.0, 8, 1, 5);
        let s = e.scenario(1);
        let ones = vec![1.0; 9];
        let b = stochastic_integral(&ones, &s, Integrator::Driver).unwrap();
        assert_eq!(b, s.driver_path());
        let q = stochastic_integral(&ones, &s, Integrator::QuadraticVariation).unwrap();
        assert_eq!(q, s.quadratic_variation_path());
        let z = stochastic_integral(&[0.0; 9], &s, Integrator::Driver).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
        assert!(stochastic_integral(&[1.0; 8], &s, Integrator::Time).is_err());
    }

    #[test]
    fn sup_distance_examples() {
        let e = ensemble(1.0, 2.0, 16, 2000, 6);
        let b = AdaptedProcess::driver(&e);
        assert_eq!(sup_msq_distance(&b, &b, &e).unwrap(), 0.0);
        let shifted = b.map(|v| v + 0.75);
        // exact only when the shift survives rounding; use a dyadic constant path
        let zero = AdaptedProcess::constant(&e, 0.0);
        let c = AdaptedProcess::constant(&e, 0.75);
        assert_eq!(sup_msq_distance(&zero, &c, &e).unwrap(), 0.5625);
        let d = sup_msq_distance(&b, &shifted, &e).unwrap();
        assert!((d - 0.5625).abs() < 1e-12);
        let prof = msq_distance_profile(&b, &zero, &e).unwrap();
        let last = prof.last().unwrap();
        assert!((last.value - 4.0).abs() <= 3.0 * last.std_error());
    }

    #[test]
    fn mg_norm_examples() {
        let e = ensemble(1.0, 2.0, 64, 2000, 7);
        let c = AdaptedProcess::constant(&e, 3.0);
        assert!((mg_norm(&c, 2.0, &e).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(mg_norm(&AdaptedProcess::constant(&e, 0.0), 1.0, &e).unwrap(), 0.0);
        let b = AdaptedProcess::driver(&e);
        let n = mg_norm(&b, 2.0, &e).unwrap();
        // left-endpoint bias 4 * dt * N(N-1)/2 / N = 2 (1 - 1/N)
        let target = (2.0f64 * (1.0 - 1.0 / 64.0)).sqrt();
        assert!((n - target).abs() < 0.05, "{n}");
    }

    #[test]
    fn isometry_constant_integrand() {
        let e = ensemble(1.0, 2.0, 50, 4000, 8);
        let r = ito_isometry_report(&AdaptedProcess::constant(&e, 1.0), &e).unwrap();
        assert!(r.lhs_matches_mid && r.mid_within_rhs, "{r:?}");
        assert!((r.mid.value - 4.0).abs() < 1e-12);
        assert!((r.rhs.value - 4.0).abs() < 1e-12);

        let z = ito_isometry_report(&AdaptedProcess::constant(&e, 0.0), &e).unwrap();
        assert_eq!((z.lhs.value, z.mid.value, z.rhs.value), (0.0, 0.0, 0.0));

        let classical = ensemble(1.0, 1.0, 50, 4000, 9);
        let r = ito_isometry_report(&AdaptedProcess::constant(&classical, 1.0), &classical).unwrap();
        assert!(r.lhs_matches_mid && r.mid_within_rhs);
        assert!((r.rhs.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn doob_examples() {
        let e = ensemble(1.0, 2.0, 50, 2000, 10);
        let r = maximal_inequality_report(&AdaptedProcess::constant(&e, 1.0), &e).unwrap();
        assert!((r.doob_bound.value - 16.0).abs() < 1e-12);
        assert!(r.holds);
        let z = maximal_inequality_report(&AdaptedProcess::constant(&e, 0.0), &e).unwrap();
        assert_eq!((z.sup_moment.value, z.doob_bound.value), (0.0, 0.0));

        let c = ensemble(1.0, 1.0, 50, 2000, 11);
        let r = maximal_inequality_report(&AdaptedProcess::constant(&c, 1.0), &c).unwrap();
        let (v, se) = (r.sup_moment.value, r.sup_moment.std_error);
        assert!(v >= 1.0 - 3.0 * se && v <= 4.0 + 3.0 * se, "{r:?}");
    }

    fn branching() -> Ensemble {
        let p = GParams::new(1.0, 2.0).unwrap();
        let grid = TimeGrid::new(1.0, 12).unwrap();
        let controls = build_control_lattice(&p, &grid, LatticeSpec::new(2, 2)).unwrap();
        Ensemble::branching(p, grid, controls, 5, &[0, 3, 6, 9, 12]).unwrap()
    }

    #[test]
    fn adaptedness_probe_examples() {
        let e = branching();
        let b = AdaptedProcess::driver(&e);
        let t = AdaptedProcess::from_fn(&e, |_| (0..=12).map(|i| (i as f64).sin()).collect()).unwrap();
        for i in 0..=12 {
            assert!(adaptedness_probe(&b, &e, i).unwrap());
            assert!(adaptedness_probe(&t, &e, i).unwrap());
        }
        let peek = AdaptedProcess::from_fn(&e, |s| {
            let mut v = s.dw().to_vec();
            v.push(0.0);
            v
        })
        .unwrap();
        assert!((0..12).any(|i| !adaptedness_probe(&peek, &e, i).unwrap()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn lattice_refinement_never_lowers_the_estimate(seed in 0u64..500) {
            let p = GParams::new(0.5, 1.5).unwrap();
            let grid = TimeGrid::new(1.0, 12).unwrap();
            let coarse = build_control_lattice(&p, &grid, LatticeSpec::new(2, 1)).unwrap();
            let fine = build_control_lattice(&p, &grid, LatticeSpec::new(3, 2)).unwrap();
            let payoff = |s: &Scenario| {
                let b = s.driver_path();
                b.iter().map(|v| v.abs()).fold(0.0, f64::max) - b[6].powi(2)
            };
            let a = estimate(&Ensemble::generate(p, grid.clone(), coarse, 20, seed).unwrap(), payoff).unwrap();
            let b = estimate(&Ensemble::generate(p, grid, fine, 20, seed).unwrap(), payoff).unwrap();
            prop_assert!(a.value <= b.value);
        }

        #[test]
        fn lower_never_exceeds_upper(seed in 0u64..500, shift in -3f64..3.0) {
            let e = ensemble(0.8, 1.7, 6, 15, seed);
            let f = |s: &Scenario| (terminal_b(s) + shift).powi(3);
            prop_assert!(lower_expectation(&e, f).unwrap().value <= estimate(&e, f).unwrap().value);
        }

        #[test]
        fn constant_control_scenarios_average_their_density(seed in 0u64..100) {
            let p = GParams::new(1.0, 2.0).unwrap();
            let grid = TimeGrid::new(1.0, 8).unwrap();
            let ctl = VolatilityControl::constant(2.5, &grid, &p).unwrap();
            let e = Ensemble::generate(p, grid, vec![ctl], 10, seed).unwrap();
            let q = estimate(&e, |s| s.dqv().iter().sum()).unwrap();
            prop_assert!((q.value - 2.5).abs() < 1e-14);
        }
    }
}
