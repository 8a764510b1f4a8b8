use std::collections::BTreeMap;
use std::f64::consts::{E, SQRT_2};

use super::{CoefficientFamily, HypothesisClass, HypothesisMetadata};
use crate::error::{Error, Result};

pub type FamilyParams = BTreeMap<String, f64>;

pub const BUILTIN_FAMILIES: [&str; 7] = [
    "zero",
    "linear_ode",
    "conv_cosh",
    "geometric",
    "singular_kernel",
    "log_modulus",
    "affine_param",
];

struct Reader<'a> {
    family: &'static str,
    params: &'a FamilyParams,
    allowed: &'static [&'static str],
}

impl Reader<'_> {
    fn check_keys(&self) -> Result<()> {
        for key in self.params.keys() {
            if !self.allowed.contains(&key.as_str()) {
                return Err(self.error(format!(
                    "unknown parameter `{key}` (expected one of {:?})",
                    self.allowed
                )));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.params.get(key).copied().unwrap_or(default);
        if !v.is_finite() {
            return Err(self.error(format!("parameter `{key}` must be finite")));
        }
        Ok(v)
    }

    fn error(&self, message: String) -> Error {
        Error::FamilyParameter {
            family: self.family.to_string(),
            message,
        }
    }
}

fn forcing(r: &Reader<'_>) -> Result<(f64, f64)> {
    Ok((r.get("phi", 1.0)?, r.get("phi_slope", 0.0)?))
}

/// Odd extension of `u sqrt(1 - ln u)` on `(0, 1/e]`, affine beyond with
/// matching value and slope.
fn log_modulus_m(x: f64) -> f64 {
    let u = x.abs();
    let u0 = 1.0 / E;
    let v = if u == 0.0 {
        0.0
    } else if u <= u0 {
        u * (1.0 - u.ln()).sqrt()
    } else {
        u0 * SQRT_2 + 1.5 / SQRT_2 * (u - u0)
    };
    v.copysign(x)
}

/// `c u (1 - ln u)` on `[0, 1/e]`, `c (u + 1/e)` beyond.
fn log_psi(c: f64) -> impl Fn(f64) -> f64 + Send + Sync + Clone {
    move |u: f64| {
        if u <= 0.0 {
            0.0
        } else if u <= 1.0 / E {
            c * u * (1.0 - u.ln())
        } else {
            c * (u + 1.0 / E)
        }
    }
}

/// Builds one of [`BUILTIN_FAMILIES`] with its declared witnesses.
pub fn builtin_family(
    name: &str,
    params: &FamilyParams,
) -> Result<(CoefficientFamily, HypothesisMetadata)> {
    use HypothesisClass::*;
    let linear = |u: f64| u;
    match name {
        "zero" => {
            let r = Reader {
                family: "zero",
                params,
                allowed: &["phi", "phi_slope"],
            };
            r.check_keys()?;
            let (p0, p1) = forcing(&r)?;
            let fam = CoefficientFamily::new("zero")
                .with_phi(move |t, _| p0 + p1 * t)
                .outer_time_free(true);
            let meta = HypothesisMetadata::new(TimeVaryingLipschitz)
                .with_lipschitz_fn(|_, _| 1.0)
                .with_time_witness(|_, _, _| 0.0, |_| 1.0)
                .with_rho(linear)
                .with_psi(linear)
                .with_lipschitz_const(1.0);
            Ok((fam, meta))
        }
        "linear_ode" => {
            let r = Reader {
                family: "linear_ode",
                params,
                allowed: &["phi", "phi_slope", "rate"],
            };
            r.check_keys()?;
            let (p0, p1) = forcing(&r)?;
            let a = r.get("rate", 1.0)?;
            let l = a.abs();
            let fam = CoefficientFamily::new("linear_ode")
                .with_b(move |_, _, x, _| a * x)
                .with_phi(move |t, _| p0 + p1 * t)
                .outer_time_free(true);
            let meta = HypothesisMetadata::new(TimeVaryingLipschitz)
                .with_lipschitz_fn(move |_, _| l)
                .with_time_witness(|_, _, _| 0.0, |_| 1.0)
                .with_rho(linear)
                .with_psi(move |u| a * a * u)
                .with_lipschitz_const(l.max(f64::MIN_POSITIVE));
            Ok((fam, meta))
        }
        "conv_cosh" => {
            let r = Reader {
                family: "conv_cosh",
                params,
                allowed: &["phi", "phi_slope", "eps"],
            };
            r.check_keys()?;
            let (p0, p1) = forcing(&r)?;
            let eps = r.get("eps", 0.0)?;
            if eps < 0.0 {
                return Err(r.error("eps must be >= 0".into()));
            }
            let q = 2.0 + eps;
            let fam = CoefficientFamily::new("conv_cosh")
                .with_b(|t, s, x, _| (t - s) * x)
                .with_phi(move |t, _| p0 + p1 * t);
            // |b(t1,s,x) - b(t2,s,x)| = |t1 - t2| |x|; int_0^{t2} |t1-t2|^q ds <= T |t1-t2|^q
            let meta = HypothesisMetadata::new(TimeVaryingLipschitz)
                .with_exponents(eps, f64::INFINITY)
                .with_lipschitz_fn(|t, s| t - s)
                .with_time_witness(|t1, t2, _| (t1 - t2).abs(), |horizon| horizon)
                .with_rho(move |u| u.powf(q));
            Ok((fam, meta))
        }
        "geometric" => {
            let r = Reader {
                family: "geometric",
                params,
                allowed: &["phi", "phi_slope"],
            };
            r.check_keys()?;
            let (p0, p1) = forcing(&r)?;
            let fam = CoefficientFamily::new("geometric")
                .with_sigma(|_, _, x, _| x)
                .with_phi(move |t, _| p0 + p1 * t)
                .outer_time_free(true);
            let meta = HypothesisMetadata::new(TimeVaryingLipschitz)
                .with_lipschitz_fn(|_, _| 1.0)
                .with_time_witness(|_, _, _| 0.0, |_| 1.0)
                .with_rho(linear)
                .with_psi(linear)
                .with_lipschitz_const(1.0);
            Ok((fam, meta))
        }
        "singular_kernel" => {
            let r = Reader {
                family: "singular_kernel",
                params,
                allowed: &["phi", "phi_slope", "gamma", "eps", "eps_bar", "diag_clamp"],
            };
            r.check_keys()?;
            let (p0, p1) = forcing(&r)?;
            let gamma = r.get("gamma", 0.1)?;
            let eps = r.get("eps", 2.0)?;
            let eps_bar = r.get("eps_bar", 4.0)?;
            let clamp = r.get("diag_clamp", 0.0)?;
            if !(gamma > 0.0) || !(0.0 <= eps && eps < eps_bar) || clamp < 0.0 {
                return Err(r.error(
                    "need gamma > 0, 0 <= eps < eps_bar and diag_clamp >= 0".into(),
                ));
            }
            if gamma * (2.0 + eps_bar) >= 1.0 {
                return Err(r.error(format!(
                    "gamma * (2 + eps_bar) = {} must be < 1",
                    gamma * (2.0 + eps_bar)
                )));
            }
            let kernel = move |t: f64, s: f64| (t - s).max(clamp).powf(-gamma);
            let q = 2.0 + eps;
            let fam = CoefficientFamily::new("singular_kernel")
                .with_b(move |t, s, x, _| kernel(t, s) * x)
                .with_sigma(move |t, s, x, _| kernel(t, s) * x)
                .with_phi(move |t, _| p0 + p1 * t);
            // Two terms, each |dk| |x|: sum of q-th powers <= 2 |dk|^q (1 + |x|^q).
            let k_scale = 2f64.powf(1.0 / q);
            let c_t = 2.0 * (1.0 / (1.0 - gamma * q) + gamma.powf(q) / ((gamma + 1.0) * q - 1.0));
            let meta = HypothesisMetadata::new(TimeVaryingLipschitz)
                .with_exponents(eps, eps_bar)
                .with_lipschitz_fn(move |t, s| 2.0 * (t - s).powf(-gamma))
                .with_time_witness(
                    move |t1, t2, s| k_scale * ((t2 - s).powf(-gamma) - (t1 - s).powf(-gamma)).abs(),
                    move |_| c_t,
                )
                .with_rho(move |u| u.powf(1.0 - gamma * q));
            Ok((fam, meta))
        }
        "log_modulus" => {
            let r = Reader {
                family: "log_modulus",
                params,
                allowed: &["phi", "phi_slope", "sigma_scale"],
            };
            r.check_keys()?;
            let (p0, p1) = forcing(&r)?;
            let k = r.get("sigma_scale", 0.5)?;
            let fam = CoefficientFamily::new("log_modulus")
                .with_b(|_, _, x, _| log_modulus_m(x))
                .with_sigma(move |_, _, x, _| k * log_modulus_m(x))
                .with_phi(move |t, _| p0 + p1 * t)
                .outer_time_free(true);
            let meta = HypothesisMetadata::new(IntegralLipschitz)
                .with_psi(log_psi(2.0 * (1.0 + k * k)))
                .with_lipschitz_const(1.5 * (1.0 + k * k).sqrt())
                .with_rho(linear);
            Ok((fam, meta))
        }
        "affine_param" => {
            let r = Reader {
                family: "affine_param",
                params,
                allowed: &["drift_diffusion", "alpha_max"],
            };
            r.check_keys()?;
            let dd = r.get("drift_diffusion", 1.0)?;
            let alpha_max = r.get("alpha_max", 0.4)?;
            if dd != 0.0 && dd != 1.0 {
                return Err(r.error("drift_diffusion must be 0 or 1".into()));
            }
            if !(alpha_max > 0.0) {
                return Err(r.error("alpha_max must be > 0".into()));
            }
            let mut fam = CoefficientFamily::new("affine_param")
                .with_phi(|_, alpha| alpha)
                .parameterized(true)
                .outer_time_free(true);
            let meta = HypothesisMetadata::new(ParameterLipschitz).with_rho(linear);
            let meta = if dd == 1.0 {
                fam = fam
                    .with_b(|_, _, x, alpha| alpha + x)
                    .with_sigma(|_, _, x, alpha| alpha + x);
                // |b|^2 + |sigma|^2 = 2 (alpha + x)^2 <= 4 (1 + alpha_max^2)(1 + x^2)
                meta.with_lipschitz_const(4.0 * (1.0 + alpha_max * alpha_max))
                    .with_param_const(3.0, (-alpha_max, alpha_max))
            } else {
                meta.with_lipschitz_const(1.0)
                    .with_param_const(1.0, (-alpha_max, alpha_max))
            };
            Ok((fam, meta))
        }
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(name: &str) -> CoefficientFamily {
        builtin_family(name, &FamilyParams::new()).unwrap().0
    }

    #[test]
    fn documented_values() {
        let z = family("zero");
        assert_eq!(z.triple(0.7, 0.2, 3.0, 0.0), [0.0, 0.0, 0.0]);
        assert_eq!(family("linear_ode").b(1.0, 0.5, 2.0, 0.0), 2.0);
        assert_eq!(family("conv_cosh").b(1.0, 0.25, 2.0, 0.0), 1.5);
        assert_eq!(family("geometric").sigma(1.0, 0.5, -3.0, 0.0), -3.0);
        let a = family("affine_param");
        assert_eq!(a.b(1.0, 0.5, 2.0, 0.25), 2.25);
        assert_eq!(a.phi(0.3, 0.25), 0.25);
    }

    #[test]
    fn all_builtins_have_valid_metadata() {
        for name in BUILTIN_FAMILIES {
            let (_, meta) = builtin_family(name, &FamilyParams::new()).unwrap();
            meta.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_names_and_keys_are_rejected() {
        assert!(matches!(
            builtin_family("nope", &FamilyParams::new()),
            Err(Error::UnknownFamily(_))
        ));
        let p = FamilyParams::from([("gama".to_string(), 0.1)]);
        assert!(matches!(
            builtin_family("singular_kernel", &p),
            Err(Error::FamilyParameter { .. })
        ));
    }

    #[test]
    fn singular_kernel_gamma_bound() {
        let p = FamilyParams::from([("gamma".to_string(), 0.2), ("eps_bar".to_string(), 3.0)]);
        let err = builtin_family("singular_kernel", &p).unwrap_err();
        assert!(err.to_string().contains("must be < 1"), "{err}");
        let ok = FamilyParams::from([("gamma".to_string(), 0.2), ("eps_bar".to_string(), 2.5)]);
        assert!(builtin_family("singular_kernel", &ok).is_ok());
    }

    #[test]
    fn log_modulus_is_odd_continuous_and_c1_at_the_junction() {
        let u0 = 1.0 / E;
        let (below, above) = (log_modulus_m(u0 - 1e-9), log_modulus_m(u0 + 1e-9));
        assert!((below - above).abs() < 1e-8);
        let slope_left = (log_modulus_m(u0) - log_modulus_m(u0 - 1e-6)) / 1e-6;
        assert!((slope_left - 1.5 / SQRT_2).abs() < 1e-5);
        for x in [0.0, 1e-300, 1e-5, 0.3, 2.0, 50.0] {
            assert_eq!(log_modulus_m(-x), -log_modulus_m(x));
        }
    }

    #[test]
    fn log_psi_matches_near_zero_and_is_c1() {
        let psi = log_psi(1.0);
        assert_eq!(psi(0.0), 0.0);
        let u0 = 1.0 / E;
        assert!((psi(u0) - 2.0 * u0).abs() < 1e-15);
        let left = (psi(u0) - psi(u0 - 1e-7)) / 1e-7;
        let right = (psi(u0 + 1e-7) - psi(u0)) / 1e-7;
        assert!((left - right).abs() < 1e-5);
    }

    #[test]
    fn theta_follows_eps_bar() {
        let (_, conv) = builtin_family("conv_cosh", &FamilyParams::new()).unwrap();
        assert_eq!(conv.theta(), 1.0);
        let (_, sing) = builtin_family("singular_kernel", &FamilyParams::new()).unwrap();
        assert!((sing.theta() - 4.0 / 6.0).abs() < 1e-15);
    }
}
