//! Sampling audits. They can falsify a declared hypothesis, never prove it.
//!
//! Every check compares `lhs <= rhs * (1 + slack)` on random points. A
//! rounding allowance derived from the magnitudes of the evaluated
//! coefficients is added to the right-hand side, so that exact witnesses
//! survive cancellation between nearly equal points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CoefficientFamily, HypothesisClass, HypothesisMetadata, Modulus};
use crate::error::{Error, Result};
use crate::quadrature::tanh_sinh;
use crate::rng::UniformStream;

const ROUNDING: f64 = 8.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    pub horizon: f64,
    /// Points are drawn from `[-x_range, x_range]`.
    pub x_range: f64,
    pub slack: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            samples: 4000,
            seed: 7,
            horizon: 1.0,
            x_range: 10.0,
            slack: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub k_max: usize,
    /// Required partial sum of `int du / psi(u)` over `[2^-(k_max+1), 1]`
    /// after normalizing `psi(1) = 1`.
    pub threshold: f64,
    /// Required ratio of growth over the last doubling window to growth over
    /// the previous one.
    pub window: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            k_max: 60,
            threshold: 3.0,
            window: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub ratio: f64,
    pub point: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub samples: usize,
    /// Largest observed `lhs / rhs`.
    pub max_ratio: f64,
    pub violation: Option<Violation>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceProbe {
    pub k_max: usize,
    /// `psi(1)`, the normalization applied before summing.
    pub scale: f64,
    /// `S_k = sum_{j<=k} int_{2^-(j+1)}^{2^-j} psi(1) du / psi(u)`.
    pub partial_sums: Vec<f64>,
    pub threshold: f64,
    pub window_ratio: f64,
    pub diverges: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub audit: String,
    pub family: String,
    pub checks: Vec<CheckResult>,
    pub probe: Option<DivergenceProbe>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }

    /// Largest ratio across all checks.
    pub fn max_ratio(&self) -> f64 {
        self.checks.iter().map(|c| c.max_ratio).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    t: f64,
    t2: f64,
    s: f64,
    x: f64,
    y: f64,
    alpha: f64,
    beta: f64,
}

impl Point {
    fn labelled(&self) -> Vec<(String, f64)> {
        [
            ("t", self.t),
            ("t2", self.t2),
            ("s", self.s),
            ("x", self.x),
            ("y", self.y),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect()
    }
}

/// Mixes uniform pairs with log-uniform separations down to 1e-12 and
/// near-coincident time pairs.
fn sample_points(cfg: &SamplerConfig, alpha_range: Option<(f64, f64)>) -> Vec<Point> {
    let mut rng = UniformStream::new(cfg.seed);
    let r = cfg.x_range;
    (0..cfg.samples)
        .map(|k| {
            let t = cfg.horizon * (1.0 - rng.next_f64());
            let t2 = if k % 2 == 0 {
                t * rng.next_f64()
            } else {
                (t - t * 10f64.powf(rng.range(-8.0, 0.0))).max(0.0)
            };
            let s_frac = rng.next_f64() * (1.0 - 1e-9);
            let x = rng.range(-r, r);
            let y = if k % 3 == 0 {
                rng.range(-r, r)
            } else {
                let d = 10f64.powf(rng.range(-12.0, 0.0));
                if rng.next_f64() < 0.5 {
                    x + d
                } else {
                    x - d
                }
            };
            let (alpha, beta) = match alpha_range {
                Some((lo, hi)) => (rng.range(lo, hi), rng.range(lo, hi)),
                None => (0.0, 0.0),
            };
            Point {
                t,
                t2,
                s: s_frac * t,
                x,
                y,
                alpha,
                beta,
            }
        })
        .collect()
}

/// `(lhs, rhs, allowance)` per point.
fn run_check<P, F>(name: &str, points: &[P], slack: f64, label: impl Fn(&P) -> Vec<(String, f64)>, f: F) -> CheckResult
where
    P: Sync,
    F: Fn(&P) -> (f64, f64, f64) + Sync,
{
    let evaluated: Vec<(f64, f64, f64)> = points.par_iter().map(&f).collect();
    let ratio = |(lhs, rhs, _): (f64, f64, f64)| {
        if lhs == 0.0 {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        }
    };
    let violated = |&(lhs, rhs, noise): &(f64, f64, f64)| {
        !(lhs <= rhs * (1.0 + slack) + noise)
    };
    let max_ratio = evaluated.iter().map(|&e| ratio(e)).fold(0.0, f64::max);
    let violation = evaluated.iter().position(violated).map(|k| Violation {
        ratio: ratio(evaluated[k]),
        point: label(&points[k]),
    });
    CheckResult {
        name: name.to_string(),
        samples: points.len(),
        passed: violation.is_none(),
        max_ratio,
        violation,
    }
}

fn kernels(family: &CoefficientFamily) -> Vec<&super::Kernel> {
    [family.b_kernel(), family.h_kernel(), family.sigma_kernel()]
        .into_iter()
        .flatten()
        .collect()
}

/// Allowance on `sum |d|^q` when each difference carries an absolute error
/// proportional to the magnitudes it was formed from.
fn power_allowance(diffs: &[(f64, f64)], q: f64) -> f64 {
    diffs
        .iter()
        .map(|&(d, mag)| (d.abs() + ROUNDING * mag).powf(q) - d.abs().powf(q))
        .sum()
}

fn alpha_range_for(family: &CoefficientFamily, meta: &HypothesisMetadata) -> Option<(f64, f64)> {
    if family.is_parameterized() {
        meta.alpha_range
    } else {
        None
    }
}

/// Spatial Lipschitz and growth bounds with `L(t, s)` (time-varying class)
/// or the constant `L` (parameter class).
pub fn audit_lipschitz(
    family: &CoefficientFamily,
    meta: &HypothesisMetadata,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    let points = sample_points(cfg, alpha_range_for(family, meta));
    let ks = kernels(family);
    let label = Point::labelled;
    let diffs = |p: &Point| -> Vec<(f64, f64)> {
        ks.iter()
            .map(|f| {
                let (a, b) = (f(p.t, p.s, p.x, p.alpha), f(p.t, p.s, p.y, p.alpha));
                (a - b, a.abs() + b.abs())
            })
            .collect()
    };
    let values = |p: &Point| -> Vec<f64> { ks.iter().map(|f| f(p.t, p.s, p.x, p.alpha)).collect() };

    let mut checks = Vec::new();
    match meta.class {
        HypothesisClass::TimeVaryingLipschitz => {
            let l = meta.lipschitz_fn.as_ref().ok_or_else(|| missing("L(t,s)"))?;
            let q = meta.moment_exponent();
            checks.push(run_check("lipschitz", &points, cfg.slack, label, |p| {
                let d = diffs(p);
                let lhs: f64 = d.iter().map(|(v, _)| v.abs()).sum();
                let noise = ROUNDING * d.iter().map(|(_, m)| m).sum::<f64>();
                (lhs, l(p.t, p.s) * (p.x - p.y).abs(), noise)
            }));
            checks.push(run_check("growth", &points, cfg.slack, label, |p| {
                let lhs: f64 = values(p).iter().map(|v| v.abs().powf(q)).sum();
                let rhs = l(p.t, p.s).powf(q) * (1.0 + p.x.abs().powf(q));
                (lhs, rhs, q * ROUNDING * lhs)
            }));
            let integral = lipschitz_integral(meta, cfg.horizon, 32)?;
            checks.push(CheckResult {
                name: "integrability".into(),
                samples: 32,
                max_ratio: integral,
                violation: (!integral.is_finite()).then(|| Violation {
                    ratio: integral,
                    point: vec![],
                }),
                passed: integral.is_finite(),
            });
        }
        HypothesisClass::ParameterLipschitz => {
            let l = meta.lipschitz_const.ok_or_else(|| missing("L"))?;
            checks.push(run_check("lipschitz", &points, cfg.slack, label, |p| {
                let d = diffs(p);
                let lhs: f64 = d.iter().map(|(v, _)| v.abs()).sum();
                let noise = ROUNDING * d.iter().map(|(_, m)| m).sum::<f64>();
                (lhs, l * (p.x - p.y).abs(), noise)
            }));
            checks.push(run_check("growth", &points, cfg.slack, label, |p| {
                let lhs: f64 = values(p).iter().map(|v| v * v).sum();
                (lhs, l * (1.0 + p.x * p.x), 2.0 * ROUNDING * lhs)
            }));
        }
        HypothesisClass::IntegralLipschitz => {
            return Err(Error::InvalidArgument(
                "integral-Lipschitz claims are audited by audit_integral_lipschitz".into(),
            ))
        }
    }
    Ok(AuditReport {
        audit: "lipschitz".into(),
        family: family.name().to_string(),
        checks,
        probe: None,
    })
}

fn missing(what: &str) -> Error {
    Error::InvalidArgument(format!("hypothesis metadata lacks witness {what}"))
}

/// `sup_t int_0^t L(t, s)^{2 + eps_bar} ds` over `points` outer times, or
/// `sup L` on a sample grid when `eps_bar` is infinite.
pub fn lipschitz_integral(meta: &HypothesisMetadata, horizon: f64, points: usize) -> Result<f64> {
    let l = meta.lipschitz_fn.as_ref().ok_or_else(|| missing("L(t,s)"))?;
    let times = (1..=points).map(|k| horizon * k as f64 / points as f64);
    if meta.eps_bar.is_infinite() {
        let mut sup = 0.0f64;
        for t in times {
            for j in 0..points {
                sup = sup.max(l(t, t * j as f64 / points as f64));
            }
        }
        return Ok(sup);
    }
    let q = 2.0 + meta.eps_bar;
    Ok(times
        .map(|t| tanh_sinh(|s, _| l(t, s).powf(q), 0.0, t, 1e-10, 12).value)
        .fold(0.0, f64::max))
}

/// Time-regularity bounds: the pointwise and integrated `K` bounds (and the
/// optional diffusion-only Hoelder witness) for the time-varying class, the
/// pointwise `rho` bound for the other classes.
pub fn audit_time_regularity(
    family: &CoefficientFamily,
    meta: &HypothesisMetadata,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    let points: Vec<Point> = sample_points(cfg, alpha_range_for(family, meta))
        .into_iter()
        .map(|mut p| {
            // s below the smaller time t2
            p.s = p.s / p.t * p.t2;
            p
        })
        .collect();
    let rho = meta.rho.as_ref().ok_or_else(|| missing("rho"))?;
    let ks = kernels(family);
    let label = Point::labelled;
    let time_diffs = |p: &Point, which: &[&super::Kernel]| -> Vec<(f64, f64)> {
        which
            .iter()
            .map(|f| {
                let (a, b) = (f(p.t, p.s, p.x, p.alpha), f(p.t2, p.s, p.x, p.alpha));
                (a - b, a.abs() + b.abs())
            })
            .collect()
    };
    let mut checks = Vec::new();
    match meta.class {
        HypothesisClass::TimeVaryingLipschitz => {
            let w = meta.time_witness.as_ref().ok_or_else(|| missing("K(t1,t2,s)"))?;
            let q = meta.moment_exponent();
            checks.push(run_check("time_pointwise", &points, cfg.slack, label, |p| {
                let d = time_diffs(p, &ks);
                let lhs: f64 = d.iter().map(|(v, _)| v.abs().powf(q)).sum();
                let rhs = (w.k)(p.t, p.t2, p.s).powf(q) * (1.0 + p.x.abs().powf(q));
                (lhs, rhs, power_allowance(&d, q))
            }));
            let c_t = (w.c_t)(cfg.horizon);
            let aggregate: Vec<Point> = points.iter().step_by(20).copied().collect();
            checks.push(run_check("time_aggregate", &aggregate, cfg.slack, label, |p| {
                let lhs = integrate_k(&w.k, p, q);
                (lhs, c_t * rho((p.t - p.t2).abs()), 1e-8 * lhs)
            }));
            if let Some(h) = &meta.holder {
                let sig: Vec<&super::Kernel> = family.sigma_kernel().into_iter().collect();
                checks.push(run_check("holder_pointwise", &points, cfg.slack, label, |p| {
                    let d = time_diffs(p, &sig);
                    let lhs: f64 = d.iter().map(|(v, _)| v.abs().powf(q)).sum();
                    let rhs = (h.k_bar)(p.t, p.t2, p.s).powf(q) * (1.0 + p.x.abs().powf(q));
                    (lhs, rhs, power_allowance(&d, q))
                }));
                let c_h = (h.c_t)(cfg.horizon);
                checks.push(run_check("holder_aggregate", &aggregate, cfg.slack, label, |p| {
                    let lhs = integrate_k(&h.k_bar, p, q);
                    (lhs, c_h * (p.t - p.t2).abs().powf(h.alpha), 1e-8 * lhs)
                }));
            }
        }
        HypothesisClass::IntegralLipschitz | HypothesisClass::ParameterLipschitz => {
            checks.push(run_check("time_pointwise", &points, cfg.slack, label, |p| {
                let d = time_diffs(p, &ks);
                let lhs: f64 = d.iter().map(|(v, _)| v * v).sum();
                (lhs, rho((p.t - p.t2).abs()), power_allowance(&d, 2.0))
            }));
        }
    }
    Ok(AuditReport {
        audit: "time_regularity".into(),
        family: family.name().to_string(),
        checks,
        probe: None,
    })
}

fn integrate_k(k: &super::TimeModulus, p: &Point, q: f64) -> f64 {
    if p.t2 <= 0.0 {
        return 0.0;
    }
    tanh_sinh(|s, _| k(p.t, p.t2, s).powf(q), 0.0, p.t2, 1e-10, 12).value
}

/// Concave-modulus bound, growth bound with constant `L`, concavity and
/// monotonicity of `psi` on a grid, and the Osgood divergence probe.
pub fn audit_integral_lipschitz(
    family: &CoefficientFamily,
    meta: &HypothesisMetadata,
    cfg: &SamplerConfig,
    probe_cfg: &ProbeConfig,
) -> Result<AuditReport> {
    let psi = meta.psi.as_ref().ok_or_else(|| missing("psi"))?;
    let l = meta.lipschitz_const.ok_or_else(|| missing("L"))?;
    let points = sample_points(cfg, alpha_range_for(family, meta));
    let ks = kernels(family);
    let label = Point::labelled;
    let mut checks = Vec::new();
    checks.push(run_check("modulus", &points, cfg.slack, label, |p| {
        let d: Vec<(f64, f64)> = ks
            .iter()
            .map(|f| {
                let (a, b) = (f(p.t, p.s, p.x, p.alpha), f(p.t, p.s, p.y, p.alpha));
                (a - b, a.abs() + b.abs())
            })
            .collect();
        let lhs: f64 = d.iter().map(|(v, _)| v * v).sum();
        let dx = p.x - p.y;
        (lhs, psi(dx * dx), power_allowance(&d, 2.0))
    }));
    checks.push(run_check("growth", &points, cfg.slack, label, |p| {
        let lhs: f64 = ks.iter().map(|f| f(p.t, p.s, p.x, p.alpha).powi(2)).sum();
        (lhs, l * l * (1.0 + p.x * p.x), 2.0 * ROUNDING * lhs)
    }));
    checks.extend(modulus_shape_checks(psi));
    let probe = divergence_probe(psi, probe_cfg);
    checks.push(CheckResult {
        name: "divergence".into(),
        samples: probe.partial_sums.len(),
        max_ratio: probe.partial_sums.last().copied().unwrap_or(0.0) / probe.threshold,
        violation: (!probe.diverges).then(|| Violation {
            ratio: probe.window_ratio,
            point: vec![("k_max".into(), probe.k_max as f64)],
        }),
        passed: probe.diverges,
    });
    Ok(AuditReport {
        audit: "integral_lipschitz".into(),
        family: family.name().to_string(),
        checks,
        probe: Some(probe),
    })
}

/// Grid checks that `psi(0) = 0`, `psi` is nondecreasing and midpoint concave.
fn modulus_shape_checks(psi: &Modulus) -> Vec<CheckResult> {
    let mut grid: Vec<f64> = vec![0.0];
    grid.extend((0..=150).map(|k| 10f64.powf(-12.0 + k as f64 * 0.1)));
    let pairs: Vec<(f64, f64)> = grid
        .windows(2)
        .map(|w| (w[0], w[1]))
        .chain(grid.iter().step_by(10).map(|&b| (0.0, b)))
        .chain(grid.windows(3).map(|w| (w[0], w[2])))
        .collect();
    let label = |&(a, b): &(f64, f64)| vec![("a".to_string(), a), ("b".to_string(), b)];
    let zero = psi(0.0);
    let origin = CheckResult {
        name: "modulus_origin".into(),
        samples: 1,
        max_ratio: zero.abs(),
        violation: (zero != 0.0).then(|| Violation {
            ratio: zero,
            point: vec![("u".into(), 0.0)],
        }),
        passed: zero == 0.0,
    };
    let monotone = run_check("modulus_monotone", &pairs, 0.0, label, |&(a, b)| {
        let (pa, pb) = (psi(a), psi(b));
        (pa, pb, ROUNDING * pa.abs())
    });
    let concave = run_check("modulus_concave", &pairs, 0.0, label, |&(a, b)| {
        let avg = 0.5 * (psi(a) + psi(b));
        let mid = psi(0.5 * (a + b));
        (avg, mid, ROUNDING * avg.abs())
    });
    vec![origin, monotone, concave]
}

/// Partial sums of `int_{0+} du / psi(u)` over dyadic blocks, with `psi`
/// rescaled so that `psi(1) = 1`. Divergence is declared when the sum reaches
/// the threshold and is still growing at least as fast over the last
/// doubling window `(k_max/2, k_max]` as over `(k_max/4, k_max/2]`.
pub fn divergence_probe(psi: &Modulus, cfg: &ProbeConfig) -> DivergenceProbe {
    let scale = psi(1.0);
    let blocks: Vec<f64> = (0..=cfg.k_max)
        .into_par_iter()
        .map(|k| {
            let hi = 0.5f64.powi(k as i32);
            tanh_sinh(|u, _| scale / psi(u), 0.5 * hi, hi, 1e-11, 12).value
        })
        .collect();
    let mut partial_sums = Vec::with_capacity(blocks.len());
    let mut acc = 0.0;
    for b in blocks {
        acc += b;
        partial_sums.push(acc);
    }
    let s = |k: usize| partial_sums[k];
    let k = cfg.k_max;
    let (late, early) = (s(k) - s(k / 2), s(k / 2) - s(k / 4));
    let window_ratio = if early > 0.0 {
        late / early
    } else if late > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let total = s(k);
    DivergenceProbe {
        k_max: k,
        scale,
        diverges: total.is_finite()
            && scale > 0.0
            && total >= cfg.threshold
            && window_ratio >= cfg.window,
        partial_sums,
        threshold: cfg.threshold,
        window_ratio,
    }
}

/// `|phi_a(t) - phi_b(t)| + |b_a - b_b| + |h_a - h_b| + |sigma_a - sigma_b|`.
pub fn parameter_lhs(family: &CoefficientFamily, t: f64, s: f64, x: f64, alpha: f64, beta: f64) -> f64 {
    let fa = family.triple(t, s, x, alpha);
    let fb = family.triple(t, s, x, beta);
    (family.phi(t, alpha) - family.phi(t, beta)).abs()
        + fa.iter().zip(&fb).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Parameter bound with constant `L-bar` over the declared parameter range.
pub fn audit_parameter_lipschitz(
    family: &CoefficientFamily,
    meta: &HypothesisMetadata,
    cfg: &SamplerConfig,
) -> Result<AuditReport> {
    let l_bar = meta.param_const.ok_or_else(|| missing("L-bar"))?;
    let range = meta.alpha_range.ok_or_else(|| missing("parameter range"))?;
    let points = sample_points(cfg, Some(range));
    let check = run_check("parameter", &points, cfg.slack, Point::labelled, |p| {
        let lhs = parameter_lhs(family, p.t, p.s, p.x, p.alpha, p.beta);
        let mags: f64 = family
            .triple(p.t, p.s, p.x, p.alpha)
            .iter()
            .chain(&family.triple(p.t, p.s, p.x, p.beta))
            .map(|v| v.abs())
            .sum::<f64>()
            + family.phi(p.t, p.alpha).abs()
            + family.phi(p.t, p.beta).abs();
        (lhs, l_bar * (p.alpha - p.beta).abs(), ROUNDING * mags)
    });
    Ok(AuditReport {
        audit: "parameter_lipschitz".into(),
        family: family.name().to_string(),
        checks: vec![check],
        probe: None,
    })
}
