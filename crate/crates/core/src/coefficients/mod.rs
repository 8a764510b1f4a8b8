//! Kernel triples `(b, h, sigma)` with forcing `phi`, the hypothesis class
//! they claim together with its witnesses, and sampling audits of those
//! claims.

mod audit;
mod builtin;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use audit::{
    audit_integral_lipschitz, audit_lipschitz, audit_parameter_lipschitz, audit_time_regularity,
    divergence_probe, lipschitz_integral, parameter_lhs, AuditReport, CheckResult,
    DivergenceProbe, ProbeConfig, SamplerConfig,
};
pub use builtin::{builtin_family, FamilyParams, BUILTIN_FAMILIES};

/// `(t, s, x, alpha) -> value` on `s <= t`.
pub type Kernel = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
/// `(t, alpha) -> phi`.
pub type Forcing = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `L(t, s)`.
pub type TimeFunction = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `K(t1, t2, s)`.
pub type TimeModulus = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Scalar modulus such as `rho` or `psi`.
pub type Modulus = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CoefficientFamily {
    name: String,
    b: Option<Kernel>,
    h: Option<Kernel>,
    sigma: Option<Kernel>,
    phi: Forcing,
    parameterized: bool,
    outer_time_free: bool,
}

impl fmt::Debug for CoefficientFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFamily")
            .field("name", &self.name)
            .field("b", &self.b.is_some())
            .field("h", &self.h.is_some())
            .field("sigma", &self.sigma.is_some())
            .field("parameterized", &self.parameterized)
            .field("outer_time_free", &self.outer_time_free)
            .finish()
    }
}

impl CoefficientFamily {
    /// All kernels absent (identically zero), `phi = 0`.
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            b: None,
            h: None,
            sigma: None,
            phi: Arc::new(|_, _| 0.0),
            parameterized: false,
            outer_time_free: false,
        }
    }

    pub fn with_b(mut self, f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.b = Some(Arc::new(f));
        self
    }

    pub fn with_h(mut self, f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.h = Some(Arc::new(f));
        self
    }

    pub fn with_sigma(
        mut self,
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.sigma = Some(Arc::new(f));
        self
    }

    pub fn with_phi(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.phi = Arc::new(f);
        self
    }

    pub fn parameterized(mut self, yes: bool) -> Self {
        self.parameterized = yes;
        self
    }

    /// Declares that no kernel depends on its first (outer time) argument,
    /// which lets solvers reuse running sums instead of recomputing them.
    pub fn outer_time_free(mut self, yes: bool) -> Self {
        self.outer_time_free = yes;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_parameterized(&self) -> bool {
        self.parameterized
    }

    pub fn is_outer_time_free(&self) -> bool {
        self.outer_time_free
    }

    pub fn b_kernel(&self) -> Option<&Kernel> {
        self.b.as_ref()
    }

    pub fn h_kernel(&self) -> Option<&Kernel> {
        self.h.as_ref()
    }

    pub fn sigma_kernel(&self) -> Option<&Kernel> {
        self.sigma.as_ref()
    }

    pub fn b(&self, t: f64, s: f64, x: f64, alpha: f64) -> f64 {
        self.b.as_ref().map_or(0.0, |f| f(t, s, x, alpha))
    }

    pub fn h(&self, t: f64, s: f64, x: f64, alpha: f64) -> f64 {
        self.h.as_ref().map_or(0.0, |f| f(t, s, x, alpha))
    }

    pub fn sigma(&self, t: f64, s: f64, x: f64, alpha: f64) -> f64 {
        self.sigma.as_ref().map_or(0.0, |f| f(t, s, x, alpha))
    }

    pub fn phi(&self, t: f64, alpha: f64) -> f64 {
        (self.phi)(t, alpha)
    }

    /// `[b, h, sigma]` at one point.
    pub fn triple(&self, t: f64, s: f64, x: f64, alpha: f64) -> [f64; 3] {
        [
            self.b(t, s, x, alpha),
            self.h(t, s, x, alpha),
            self.sigma(t, s, x, alpha),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HypothesisClass {
    /// Lipschitz in `x` with a time-dependent constant `L(t, s)`.
    TimeVaryingLipschitz,
    /// Concave modulus `psi` on squared differences.
    IntegralLipschitz,
    /// Constant Lipschitz bound plus Lipschitz dependence on a parameter.
    ParameterLipschitz,
}

/// Bound `int_0^{t2} K^q(t1, t2, s) ds <= C_T * modulus(|t1 - t2|)`.
#[derive(Clone)]
pub struct TimeWitness {
    pub k: TimeModulus,
    /// `C_T` as a function of the horizon `T`.
    pub c_t: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// Diffusion-only time regularity with modulus `|t1 - t2|^alpha`.
#[derive(Clone)]
pub struct HolderWitness {
    pub k_bar: TimeModulus,
    pub alpha: f64,
    pub c_t: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

/// Declared hypothesis class plus the witnesses the audits check.
#[derive(Clone)]
pub struct HypothesisMetadata {
    pub class: HypothesisClass,
    /// `L(t, s)`
    pub lipschitz_fn: Option<TimeFunction>,
    pub eps: f64,
    /// May be infinite when `L(t, s)` is bounded.
    pub eps_bar: f64,
    pub time_witness: Option<TimeWitness>,
    pub rho: Option<Modulus>,
    pub holder: Option<HolderWitness>,
    /// Constant `L`
    pub lipschitz_const: Option<f64>,
    pub psi: Option<Modulus>,
    /// Constant `L-bar` of the parameter bound
    pub param_const: Option<f64>,
    /// Parameter range over which the constants are valid.
    pub alpha_range: Option<(f64, f64)>,
}

impl fmt::Debug for HypothesisMetadata {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HypothesisMetadata")
            .field("class", &self.class)
            .field("eps", &self.eps)
            .field("eps_bar", &self.eps_bar)
            .field("lipschitz_const", &self.lipschitz_const)
            .field("param_const", &self.param_const)
            .field("alpha_range", &self.alpha_range)
            .finish_non_exhaustive()
    }
}

impl HypothesisMetadata {
    pub fn new(class: HypothesisClass) -> Self {
        Self {
            class,
            lipschitz_fn: None,
            eps: 0.0,
            eps_bar: f64::INFINITY,
            time_witness: None,
            rho: None,
            holder: None,
            lipschitz_const: None,
            psi: None,
            param_const: None,
            alpha_range: None,
        }
    }

    pub fn with_lipschitz_fn(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.lipschitz_fn = Some(Arc::new(f));
        self
    }

    pub fn with_exponents(mut self, eps: f64, eps_bar: f64) -> Self {
        self.eps = eps;
        self.eps_bar = eps_bar;
        self
    }

    pub fn with_time_witness(
        mut self,
        k: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        c_t: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.time_witness = Some(TimeWitness {
            k: Arc::new(k),
            c_t: Arc::new(c_t),
        });
        self
    }

    pub fn with_rho(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.rho = Some(Arc::new(f));
        self
    }

    pub fn with_lipschitz_const(mut self, l: f64) -> Self {
        self.lipschitz_const = Some(l);
        self
    }

    pub fn with_psi(mut self, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.psi = Some(Arc::new(f));
        self
    }

    pub fn with_param_const(mut self, l_bar: f64, range: (f64, f64)) -> Self {
        self.param_const = Some(l_bar);
        self.alpha_range = Some(range);
        self
    }

    /// Exponent `theta = eps_bar / (2 + eps_bar)` of the factorial bound
    /// (1 when `eps_bar` is infinite).
    pub fn theta(&self) -> f64 {
        if self.eps_bar.is_infinite() {
            1.0
        } else {
            self.eps_bar / (2.0 + self.eps_bar)
        }
    }

    /// Moment exponent `2 + eps`.
    pub fn moment_exponent(&self) -> f64 {
        2.0 + self.eps
    }

    /// Checks that the witnesses required by the class are present and the
    /// scalar constants are admissible.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("hypothesis metadata: {m}")));
        if !(self.eps >= 0.0 && self.eps < self.eps_bar) {
            return bad("exponents must satisfy 0 <= eps < eps_bar");
        }
        if self.rho.is_none() {
            return bad("time modulus rho is required");
        }
        match self.class {
            HypothesisClass::TimeVaryingLipschitz => {
                if self.lipschitz_fn.is_none() || self.time_witness.is_none() {
                    return bad("time-varying class needs L(t,s) and K(t1,t2,s)");
                }
            }
            HypothesisClass::IntegralLipschitz => {
                if self.psi.is_none() || !self.lipschitz_const.is_some_and(|l| l > 0.0) {
                    return bad("integral-Lipschitz class needs psi and L > 0");
                }
            }
            HypothesisClass::ParameterLipschitz => {
                if !self.lipschitz_const.is_some_and(|l| l > 0.0)
                    || !self.param_const.is_some_and(|l| l > 0.0)
                {
                    return bad("parameter class needs L > 0 and L-bar > 0");
                }
            }
        }
        if let Some(h) = &self.holder {
            if h.alpha <= 1.0 {
                return bad("Hoelder exponent alpha must exceed 1");
            }
        }
        Ok(())
    }
}
