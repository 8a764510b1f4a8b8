//! Inequality utilities (Gronwall, Bihari, Jensen) and the rate studies that
//! turn the qualitative statements into fitted numbers: factorial contraction
//! of Picard increments, Hölder exponents of sample paths and the quadratic
//! dependence of solutions on a parameter.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::{
    adaptedness_probe, mg_norm, sup_msq_distance, AdaptedProcess, Estimate, Extremum, Measured,
    DEFAULT_SE_MULTIPLIER,
};
use crate::numeric::{exact_mean, fit_line};
use crate::scenario::{Ensemble, Scenario};
use crate::solver::{direct_solve_ensemble, solve, SolverChoice, VolterraProblem};

/// `a exp(b t)`, the bound for `u(t) <= a + b int_0^t u ds`.
pub fn gronwall_bound(a: f64, b: f64, t: f64) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0 && t >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Gronwall bound needs a, b, t >= 0 (got {a}, {b}, {t})"
        )));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    Ok(a * (b * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BihariOutcome {
    Value(f64),
    /// The majorant left every finite bound before the requested time.
    BlowUp { time: f64 },
}

impl BihariOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(*v),
            Self::BlowUp { .. } => None,
        }
    }
}

const BIHARI_RTOL: f64 = 1e-9;

/// Solves `v' = gamma(v)`, `v(0) = v0` up to `t` with adaptive
/// Dormand-Prince 5(4) steps under a relative tolerance of 1e-9. The result
/// majorizes any `u` with `u(t) <= v0 + int_0^t gamma(u) ds`.
pub fn bihari_majorant<G>(gamma: G, v0: f64, t: f64) -> Result<BihariOutcome>
where
    G: Fn(f64) -> f64,
{
    if !(v0 >= 0.0 && v0.is_finite() && t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Bihari majorant needs finite v0 >= 0 and t >= 0 (got {v0}, {t})"
        )));
    }
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    // fifth-order weights are the last row of A; embedded fourth order below
    const E4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let f = |v: f64| gamma(v.max(0.0));
    let mut time = 0.0;
    let mut y = v0;
    let mut h = if t > 0.0 { t * 1e-3 } else { 0.0 };
    let h_min = 1e-14 * t.max(1.0);
    while time < t {
        h = h.min(t - time);
        let mut k = [0.0f64; 7];
        k[0] = f(y);
        for s in 0..6 {
            let yi = y + h * (0..=s).map(|j| A[s][j] * k[j]).sum::<f64>();
            k[s + 1] = f(yi);
        }
        let y5 = y + h * (0..6).map(|j| A[5][j] * k[j]).sum::<f64>();
        let y4 = y + h * (0..7).map(|j| E4[j] * k[j]).sum::<f64>();
        let scale = BIHARI_RTOL * y.abs().max(y5.abs()) + f64::MIN_POSITIVE;
        let err = if y5.is_finite() {
            (y5 - y4).abs() / scale
        } else {
            f64::INFINITY
        };
        if err <= 1.0 {
            time += h;
            y = y5;
            if y > 1e300 {
                return Ok(BihariOutcome::BlowUp { time });
            }
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h < h_min && time < t {
            return Ok(BihariOutcome::BlowUp { time });
        }
    }
    Ok(BihariOutcome::Value(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JensenReport {
    /// `E^[rho(xi)]`
    pub lhs: Measured,
    /// `rho(E^[xi])`
    pub rhs: f64,
    pub inner: Measured,
    pub holds: bool,
}

/// Jensen check `E^[rho(xi)] <= rho(E^[xi])` for concave nondecreasing `rho`,
/// within `3 SE` of the left-hand side.
pub fn jensen_gap<R, F>(rho: R, payoff: F, ensemble: &Ensemble) -> Result<JensenReport>
where
    R: Fn(f64) -> f64 + Sync + Send,
    F: Fn(&Scenario) -> f64 + Sync + Send,
{
    let xi = ensemble.map_scenarios(payoff);
    let mapped: Vec<f64> = xi.iter().map(|&v| rho(v)).collect();
    let inner = Estimate::from_values(ensemble, &xi, Extremum::Sup)?;
    let outer = Estimate::from_values(ensemble, &mapped, Extremum::Sup)?;
    let lhs = Measured::from(&outer);
    let rhs = rho(inner.value);
    let rounding = 16.0 * f64::EPSILON * (lhs.value.abs() + rhs.abs());
    Ok(JensenReport {
        lhs,
        rhs,
        inner: Measured::from(&inner),
        holds: lhs.value <= rhs + DEFAULT_SE_MULTIPLIER * lhs.std_error + rounding,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub model: String,
    pub constants: BTreeMap<String, f64>,
    pub residuals: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl RateFit {
    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Relative size of the envelope tail beyond the last increment that still
/// passes the series check.
pub const SERIES_TAIL_TOLERANCE: f64 = 1e-2;

/// Fits `d_n <= M C^{n+1} (T^{n+1} / (n+1)!)^theta` by least squares on
/// `ln d_n - theta ln(T^{n+1}/(n+1)!) = ln M + (n+1) ln C`.
///
/// Passes when every positive `d_n` lies below twice the fitted envelope and
/// the envelope's tail of `sum sqrt(d_n)` beyond the data is below
/// [`SERIES_TAIL_TOLERANCE`] times the observed partial sum.
pub fn fit_factorial_rate(increments: &[f64], theta: f64, horizon: f64) -> Result<RateFit> {
    if increments.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::InvalidArgument("increments must be finite and >= 0".into()));
    }
    let model = |n: usize| theta * ((n + 1) as f64 * horizon.ln() - ln_factorial(n + 1));
    let pts: Vec<(f64, f64)> = increments
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0.0)
        .map(|(n, &d)| ((n + 1) as f64, d.ln() - model(n)))
        .collect();
    let tolerance = std::f64::consts::LN_2;
    let mut constants = BTreeMap::new();
    constants.insert("theta".to_string(), theta);
    if pts.is_empty() {
        constants.insert("partial_sum".into(), 0.0);
        return Ok(RateFit {
            model: "factorial".into(),
            constants,
            residuals: vec![],
            tolerance,
            passed: true,
        });
    }
    let (xs, es): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let (log_m, log_c) = match fit_line(&xs, &es) {
        Some(f) => (f.intercept, f.slope),
        None => (es[0], 0.0),
    };
    let residuals: Vec<f64> = pts.iter().map(|(x, e)| e - (log_m + log_c * x)).collect();
    let envelope_ok = residuals.iter().all(|&r| r <= tolerance);

    let partial: f64 = increments.iter().map(|d| d.sqrt()).sum();
    let mut tail = 0.0;
    let mut decayed = false;
    for n in increments.len()..increments.len() + 10_000 {
        let term = (0.5 * (tolerance + log_m + log_c * (n + 1) as f64 + model(n))).exp();
        tail += term;
        if !tail.is_finite() {
            break;
        }
        if term <= 1e-17 * (partial + tail) {
            decayed = true;
            break;
        }
    }
    let series_ok = decayed && tail <= SERIES_TAIL_TOLERANCE * partial.max(f64::MIN_POSITIVE);
    constants.insert("log_m".into(), log_m);
    constants.insert("log_c".into(), log_c);
    constants.insert("partial_sum".into(), partial);
    constants.insert("tail".into(), tail);
    constants.insert("envelope_ok".into(), envelope_ok as u8 as f64);
    constants.insert("series_ok".into(), series_ok as u8 as f64);
    Ok(RateFit {
        model: "factorial".into(),
        constants,
        residuals,
        tolerance,
        passed: envelope_ok && series_ok,
    })
}

/// Tolerance on the fitted lag exponent below `1 + eps'`.
pub const HOLDER_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderStudy {
    /// `(lag, E^[|X(t+lag) - X(t)|^p])`, maximised over start times.
    pub moments: Vec<(f64, f64)>,
    pub fit: RateFit,
}

/// Regresses `ln max_t E^[|X(t+h) - X(t)|^p]` on `ln h` over dyadic lags
/// `h = dt 2^k`, `k = 0..=floor(log2 N) - 2`. Start times are the
/// non-overlapping multiples of the lag. Passes when the exponent is at least
/// `1 + eps_prime - 0.15`.
pub fn holder_exponent(
    process: &AdaptedProcess,
    p: f64,
    ensemble: &Ensemble,
    eps_prime: f64,
) -> Result<HolderStudy> {
    if !(p > 0.0) {
        return Err(Error::InvalidArgument("moment exponent must be > 0".into()));
    }
    let n = ensemble.grid().steps();
    if process.steps() != n || process.scenarios() != ensemble.len() {
        return Err(Error::LengthMismatch {
            what: "process scenarios vs ensemble",
            expected: ensemble.len(),
            actual: process.scenarios(),
        });
    }
    let k_max = (usize::BITS - 1 - n.leading_zeros()) as i64 - 2;
    if k_max < 1 {
        return Err(Error::InvalidArgument(format!("need at least 8 steps, got {n}")));
    }
    let dt = ensemble.grid().dt();
    let m = ensemble.replicas();
    let moments: Vec<(f64, f64)> = (0..=k_max as u32)
        .into_par_iter()
        .map(|k| {
            let lag = 1usize << k;
            let best = (0..=n - lag)
                .step_by(lag)
                .map(|i| {
                    let v: Vec<f64> = (0..process.scenarios())
                        .map(|s| (process.value(s, i + lag) - process.value(s, i)).abs().powf(p))
                        .collect();
                    v.chunks_exact(m).map(exact_mean).fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            (lag as f64 * dt, best)
        })
        .collect();
    let pts: Vec<(f64, f64)> = moments
        .iter()
        .filter(|(_, v)| *v > 0.0)
        .map(|(h, v)| (h.ln(), v.ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let line = fit_line(&xs, &ys).ok_or_else(|| {
        Error::InvalidArgument("process increments vanish at too many lags to fit".into())
    })?;
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - line.eval(*x)).collect();
    let mut constants = BTreeMap::new();
    constants.insert("exponent".to_string(), line.slope);
    constants.insert("c".to_string(), line.intercept.exp());
    constants.insert("p".to_string(), p);
    constants.insert("eps_prime".to_string(), eps_prime);
    Ok(HolderStudy {
        moments,
        fit: RateFit {
            model: "holder".into(),
            constants,
            residuals,
            tolerance: HOLDER_TOLERANCE,
            passed: line.slope >= 1.0 + eps_prime - HOLDER_TOLERANCE,
        },
    })
}

/// Tolerance on the fitted slope around 2.
pub const SLOPE_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairDistance {
    pub alpha: f64,
    pub beta: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityStudy {
    pub pairs: Vec<PairDistance>,
    pub fit: RateFit,
    /// `ln C` of the bound `E^[|X_a - X_b|^2] <= C |a - b|^2`.
    pub log_bound_constant: f64,
    pub bound_holds: bool,
}

/// `ln C` for `sup_t E^[|X_a(t) - X_b(t)|^2] <= C |a - b|^2`, with
/// `C = 4 Lbar^2 (1 + 2 T k) exp(8 L^2 k T)` and
/// `k = T (1 + sigma_high^4) + sigma_high^2`.
pub fn parameter_bound_log_constant(l: f64, l_bar: f64, sigma_high: f64, horizon: f64) -> f64 {
    let s2 = sigma_high * sigma_high;
    let kappa = horizon * (1.0 + s2 * s2) + s2;
    4f64.ln() + 2.0 * l_bar.ln() + (1.0 + 2.0 * horizon * kappa).ln() + 8.0 * l * l * kappa * horizon
}

/// Solves at every `alpha` on the same ensemble, measures
/// `sup_t E^[|X_a(t) - X_b(t)|^2]` for each pair and fits its log-log slope
/// against `|a - b|`.
pub fn parameter_continuity_study(
    problem: &VolterraProblem,
    alphas: &[f64],
    ensemble: &Ensemble,
    choice: &SolverChoice,
) -> Result<ContinuityStudy> {
    if alphas.len() < 2 {
        return Err(Error::InvalidArgument("need at least two parameter values".into()));
    }
    let meta = problem.metadata();
    let l = meta
        .lipschitz_const
        .ok_or_else(|| Error::InvalidArgument("metadata lacks constant L".into()))?;
    let l_bar = meta
        .param_const
        .ok_or_else(|| Error::InvalidArgument("metadata lacks constant L-bar".into()))?;
    let solutions = alphas
        .iter()
        .map(|&a| solve(&problem.with_alpha(a), ensemble, choice).map(|(s, _)| s))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for i in 0..alphas.len() {
        for j in i + 1..alphas.len() {
            pairs.push(PairDistance {
                alpha: alphas[i],
                beta: alphas[j],
                distance: sup_msq_distance(&solutions[i].paths, &solutions[j].paths, ensemble)?,
            });
        }
    }
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|p| p.alpha != p.beta && p.distance > 0.0)
        .map(|p| ((p.alpha - p.beta).abs().ln(), p.distance.ln()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    let line = fit_line(&xs, &ys)
        .ok_or_else(|| Error::InvalidArgument("fewer than two distinct positive distances".into()))?;
    let log_c = parameter_bound_log_constant(
        l,
        l_bar,
        problem.params().sigma_high(),
        problem.grid().horizon(),
    );
    let bound_holds = pairs
        .iter()
        .all(|p| p.distance == 0.0 || p.distance.ln() <= log_c + 2.0 * (p.alpha - p.beta).abs().ln());
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - line.eval(*x)).collect();
    let mut constants = BTreeMap::new();
    constants.insert("slope".to_string(), line.slope);
    constants.insert("intercept".to_string(), line.intercept);
    Ok(ContinuityStudy {
        fit: RateFit {
            model: "parameter_continuity".into(),
            constants,
            residuals,
            tolerance: SLOPE_TOLERANCE,
            passed: (line.slope - 2.0).abs() <= SLOPE_TOLERANCE && bound_holds,
        },
        pairs,
        log_bound_constant: log_c,
        bound_holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WellPosednessConfig {
    pub ceiling: f64,
    pub eps: f64,
}

impl Default for WellPosednessConfig {
    fn default() -> Self {
        Self {
            ceiling: 10.0,
            eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellPosednessReport {
    pub stochastic_part_adapted: bool,
    pub drift_part_adapted: bool,
    pub norm_2: f64,
    pub norm_2_eps: f64,
    pub norms_finite: bool,
    pub sup_second_moment: f64,
    pub below_ceiling: bool,
    pub passed: bool,
}

/// Adaptedness of the integral processes `M` (against `dB`) and `N` (against
/// `dt` and `d<B>`) of the direct solution, finiteness of `||M + N||` in the
/// `p = 2` and `p = 2 + eps` norms, and `sup_t E^[|X(t)|^2]` below a ceiling.
pub fn well_posedness_suite(
    problem: &VolterraProblem,
    ensemble: &Ensemble,
    cfg: &WellPosednessConfig,
) -> Result<WellPosednessReport> {
    let solution = direct_solve_ensemble(problem, ensemble)?;
    let n = ensemble.grid().steps();
    let split = (0..ensemble.len())
        .into_par_iter()
        .map(|k| problem.integral_processes(solution.paths.path(k), &ensemble.scenario(k)))
        .collect::<Result<Vec<_>>>()?;
    let (ms, ns): (Vec<Vec<f64>>, Vec<Vec<f64>>) = split.into_iter().unzip();
    let sum: Vec<Vec<f64>> = ms
        .iter()
        .zip(&ns)
        .map(|(m, d)| m.iter().zip(d).map(|(a, b)| a + b).collect())
        .collect();
    let m = AdaptedProcess::from_paths(n, ms)?;
    let d = AdaptedProcess::from_paths(n, ns)?;
    let total = AdaptedProcess::from_paths(n, sum)?;
    let mut adapted_m = true;
    let mut adapted_n = true;
    for i in 0..=n {
        adapted_m &= adaptedness_probe(&m, ensemble, i)?;
        adapted_n &= adaptedness_probe(&d, ensemble, i)?;
    }
    let norm_2 = mg_norm(&total, 2.0, ensemble)?;
    let norm_2_eps = mg_norm(&total, 2.0 + cfg.eps, ensemble)?;
    let zero = AdaptedProcess::constant(ensemble, 0.0);
    let sup_second_moment = sup_msq_distance(&solution.paths, &zero, ensemble)?;
    let norms_finite = norm_2.is_finite() && norm_2_eps.is_finite();
    let below_ceiling = sup_second_moment < cfg.ceiling;
    Ok(WellPosednessReport {
        stochastic_part_adapted: adapted_m,
        drift_part_adapted: adapted_n,
        norm_2,
        norm_2_eps,
        norms_finite,
        sup_second_moment,
        below_ceiling,
        passed: adapted_m && adapted_n && norms_finite && below_ceiling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{builtin_family, FamilyParams};
    use crate::scenario::{build_control_lattice, GParams, LatticeSpec, TimeGrid};
    use crate::solver::{picard_solve, PicardOptions};
    use proptest::prelude::*;
    use std::f64::consts::E;

    #[test]
    fn gronwall_examples() {
        assert_eq!(gronwall_bound(0.0, 5.0, 1.0).unwrap(), 0.0);
        assert_eq!(gronwall_bound(1.0, 0.0, 7.0).unwrap(), 1.0);
        assert!((gronwall_bound(1.0, 1.0, 1.0).unwrap() - E).abs() < 1e-15);
        assert!(gronwall_bound(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn bihari_linear_growth() {
        let v = bihari_majorant(|v| v, 1.0, 1.0).unwrap().value().unwrap();
        assert!((v - E).abs() < 1e-8 * E, "{v}");
        let v = bihari_majorant(|v| v, 1e-12, 1.0).unwrap().value().unwrap();
        assert!((v - E * 1e-12).abs() < 1e-8 * E * 1e-12, "{v}");
    }

    #[test]
    fn bihari_log_modulus_matches_closed_form_and_vanishes() {
        // v' = v (1 - ln v): v(t) = exp(1 - (1 - ln v0) e^{-t})
        let gamma = |v: f64| if v <= 0.0 { 0.0 } else { v * (1.0 - v.ln()) };
        let oracle = |v0: f64, t: f64| (1.0 - (1.0 - v0.ln()) * (-t).exp()).exp();
        let v = bihari_majorant(gamma, 1e-8, 1.0).unwrap().value().unwrap();
        assert!((v - oracle(1e-8, 1.0)).abs() < 1e-7 * v, "{v}");
        let mut v0 = 1e-8;
        let mut last = v;
        for _ in 0..40 {
            v0 *= 0.5;
            let next = bihari_majorant(gamma, v0, 1.0).unwrap().value().unwrap();
            assert!(next < last);
            last = next;
        }
        assert!(last < 1e-6, "{last}");
    }

    #[test]
    fn bihari_reports_blow_up() {
        let out = bihari_majorant(|v| v * v, 1.0, 2.0).unwrap();
        match out {
            BihariOutcome::BlowUp { time } => assert!((time - 1.0).abs() < 1e-3, "{time}"),
            other => panic!("{other:?}"),
        }
    }

    fn small_ensemble(low: f64, high: f64, steps: usize, m: usize, seed: u64) -> Ensemble {
        let p = GParams::new(low, high).unwrap();
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let c = build_control_lattice(&p, &grid, LatticeSpec::new(2, 1)).unwrap();
        Ensemble::generate(p, grid, c, m, seed).unwrap()
    }

    fn terminal_sq(s: &Scenario) -> f64 {
        s.db().iter().sum::<f64>().powi(2)
    }

    #[test]
    fn jensen_examples() {
        let e = small_ensemble(1.0, 2.0, 20, 1000, 3);
        let affine = jensen_gap(|u| 2.0 * u + 1.0, terminal_sq, &e).unwrap();
        assert!((affine.lhs.value - affine.rhs).abs() <= 3.0 * affine.lhs.std_error + 1e-12);
        let sqrt = jensen_gap(f64::sqrt, terminal_sq, &e).unwrap();
        assert!(sqrt.holds && sqrt.lhs.value < sqrt.rhs);
        let c = jensen_gap(f64::sqrt, |_| 2.25, &e).unwrap();
        assert_eq!((c.lhs.value, c.rhs), (1.5, 1.5));
    }

    #[test]
    fn factorial_fit_on_exact_taylor_increments() {
        let d: Vec<f64> = (0..9).map(|n| (-ln_factorial(n + 1)).exp().powi(2)).collect();
        let fit = fit_factorial_rate(&d, 1.0, 1.0).unwrap();
        assert!(fit.passed, "{fit:?}");
        assert!(fit.residuals.iter().all(|&r| r <= std::f64::consts::LN_2));
    }

    #[test]
    fn factorial_fit_trivial_for_zero_increments() {
        assert!(fit_factorial_rate(&[0.0], 1.0, 1.0).unwrap().passed);
    }

    #[test]
    fn factorial_fit_flags_non_contracting_fixture() {
        let params = FamilyParams::from([("rate".to_string(), 100.0)]);
        let (f, m) = builtin_family("linear_ode", &params).unwrap();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let g = GParams::new(1.0, 1.0).unwrap();
        let p = VolterraProblem::new(f, m.clone(), grid.clone(), g);
        let c = build_control_lattice(&g, &grid, LatticeSpec::new(2, 1)).unwrap();
        let e = Ensemble::generate(g, grid, c, 1, 0).unwrap();
        let (_, rep) = picard_solve(&p, &e, &PicardOptions::new(1e-30, 6)).unwrap();
        let fit = fit_factorial_rate(&rep.increments, m.theta(), 1.0).unwrap();
        assert!(!fit.passed, "{fit:?}");
    }

    #[test]
    fn holder_of_linear_path_is_two() {
        let e = small_ensemble(1.0, 1.0, 256, 4, 1);
        let x = AdaptedProcess::from_fn(&e, |_| (0..=256).map(|i| i as f64 / 256.0).collect()).unwrap();
        let h = holder_exponent(&x, 2.0, &e, 1.0).unwrap();
        assert!((h.fit.constant("exponent").unwrap() - 2.0).abs() < 1e-9);
        assert!(h.fit.passed);
        assert_eq!(h.moments.len(), 7);
    }

    #[test]
    fn holder_of_brownian_fourth_moment() {
        let e = small_ensemble(1.0, 1.0, 512, 2000, 11);
        let b = AdaptedProcess::driver(&e);
        let h = holder_exponent(&b, 4.0, &e, 1.0).unwrap();
        let x = h.fit.constant("exponent").unwrap();
        assert!((1.8..=2.2).contains(&x), "{x}");
    }

    fn affine(dd: f64, high: f64) -> VolterraProblem {
        let params = FamilyParams::from([("drift_diffusion".to_string(), dd)]);
        let (f, m) = builtin_family("affine_param", &params).unwrap();
        VolterraProblem::new(f, m, TimeGrid::new(1.0, 50).unwrap(), GParams::new(1.0, high).unwrap())
    }

    #[test]
    fn degenerate_parameter_study_is_exactly_quadratic() {
        let p = affine(0.0, 2.0);
        let c = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(2, 1)).unwrap();
        let e = Ensemble::generate(*p.params(), p.grid().clone(), c, 8, 1).unwrap();
        let s = parameter_continuity_study(&p, &[0.0, 0.05, 0.1, 0.2, 0.4], &e, &SolverChoice::Direct).unwrap();
        assert!((s.fit.constant("slope").unwrap() - 2.0).abs() < 1e-12);
        for pair in &s.pairs {
            assert_eq!(pair.distance, (pair.alpha - pair.beta).powi(2));
        }
        assert!(s.fit.passed);
    }

    #[test]
    fn full_affine_study_slope_and_bound() {
        let p = affine(1.0, 2.0);
        let c = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(2, 1)).unwrap();
        let e = Ensemble::generate(*p.params(), p.grid().clone(), c, 200, 5).unwrap();
        let s = parameter_continuity_study(&p, &[0.0, 0.1, 0.2, 0.4], &e, &SolverChoice::Direct).unwrap();
        assert!((s.fit.constant("slope").unwrap() - 2.0).abs() <= 0.1, "{s:?}");
        assert!(s.bound_holds);
    }

    #[test]
    fn well_posedness_examples() {
        let (f, m) = builtin_family("zero", &FamilyParams::new()).unwrap();
        let p = VolterraProblem::new(f, m, TimeGrid::new(1.0, 20).unwrap(), GParams::new(1.0, 2.0).unwrap());
        let c = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(2, 2)).unwrap();
        let e = Ensemble::branching(*p.params(), p.grid().clone(), c, 1, &[0, 5, 10, 20]).unwrap();
        let r = well_posedness_suite(&p, &e, &WellPosednessConfig::default()).unwrap();
        assert!(r.passed && r.norm_2 == 0.0 && r.sup_second_moment == 1.0, "{r:?}");

        let (f, m) = builtin_family("linear_ode", &FamilyParams::new()).unwrap();
        let p = VolterraProblem::new(f, m, TimeGrid::new(1.0, 1000).unwrap(), GParams::new(1.0, 1.0).unwrap());
        let c = build_control_lattice(p.params(), p.grid(), LatticeSpec::new(2, 1)).unwrap();
        let e = Ensemble::generate(*p.params(), p.grid().clone(), c, 1, 0).unwrap();
        let r = well_posedness_suite(&p, &e, &WellPosednessConfig::default()).unwrap();
        assert!(r.passed);
        assert!((r.sup_second_moment - E * E).abs() < 0.02, "{}", r.sup_second_moment);
    }

    proptest! {
        #[test]
        fn gronwall_is_monotone(a in 0f64..10.0, b in 0f64..5.0, t in 0f64..3.0, da in 0f64..1.0, db in 0f64..1.0, dt in 0f64..1.0) {
            let base = gronwall_bound(a, b, t).unwrap();
            prop_assert!(gronwall_bound(a + da, b, t).unwrap() >= base);
            prop_assert!(gronwall_bound(a, b + db, t).unwrap() >= base);
            prop_assert!(gronwall_bound(a, b, t + dt).unwrap() >= base);
            prop_assert_eq!(gronwall_bound(a, b, 0.0).unwrap(), a);
        }

        #[test]
        fn bihari_is_monotone_in_start_and_modulus(v0 in 1e-10f64..1.0, bump in 0f64..1.0, scale in 1f64..2.0) {
            let gamma = |v: f64| if v <= 0.0 { 0.0 } else { v * (1.0 - v.ln()).max(1.0) };
            let a = bihari_majorant(gamma, v0, 1.0).unwrap().value().unwrap();
            let b = bihari_majorant(gamma, v0 * (1.0 + bump), 1.0).unwrap().value().unwrap();
            let c = bihari_majorant(|v| scale * gamma(v), v0, 1.0).unwrap().value().unwrap();
            prop_assert!(b >= a * (1.0 - 1e-8));
            prop_assert!(c >= a * (1.0 - 1e-8));
        }

        #[test]
        fn jensen_holds_for_concave_maps(seed in 0u64..200, k in 0.1f64..3.0) {
            let e = small_ensemble(0.5, 1.5, 8, 50, seed);
            let r = jensen_gap(move |u: f64| (k * u).ln_1p(), terminal_sq, &e).unwrap();
            prop_assert!(r.holds);
        }

        #[test]
        fn rate_fits_are_reproducible(seed in 0u64..50) {
            let e = small_ensemble(1.0, 1.0, 64, 20, seed);
            let b = AdaptedProcess::driver(&e);
            let a = holder_exponent(&b, 2.0, &e, 0.0).unwrap();
            let c = holder_exponent(&b, 2.0, &e, 0.0).unwrap();
            prop_assert_eq!(a, c);
        }
    }
}
