//! Strict JSON experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use gsvie_core::coefficients::{builtin_family, CoefficientFamily, HypothesisClass, HypothesisMetadata};
use gsvie_core::scenario::{
    build_control_lattice, Ensemble, GParams, LatticeSpec, TimeGrid, DEFAULT_LATTICE_CAP,
};
use gsvie_core::solver::{PicardOptions, PicardStart, SolverChoice, VolterraProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub g: GConfig,
    pub grid: GridConfig,
    pub lattice: LatticeConfig,
    pub monte_carlo: MonteCarloConfig,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    pub study: StudyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GConfig {
    pub sigma_low: f64,
    pub sigma_high: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

fn default_cap() -> usize {
    DEFAULT_LATTICE_CAP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub levels: usize,
    pub pieces: usize,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub replicas: usize,
    pub master_seed: u64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessConfig {
    /// Multiplies the declared Lipschitz witness (`L(t,s)` or `L`).
    #[serde(default = "one")]
    pub lipschitz_scale: f64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        Self { lipschitz_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub alpha: f64,
    /// Must match the family's declared class when given.
    #[serde(default)]
    pub hypothesis: Option<HypothesisClass>,
    #[serde(default)]
    pub witnesses: WitnessConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    Direct,
    Picard,
}

fn default_tol() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: SolverMode,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Picard starts from `phi + start_offset`.
    #[serde(default)]
    pub start_offset: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::Direct,
            tol: default_tol(),
            max_iter: default_max_iter(),
            start_offset: 0.0,
        }
    }
}

impl SolverConfig {
    pub fn picard_options(&self) -> PicardOptions {
        let opts = PicardOptions::new(self.tol, self.max_iter);
        if self.start_offset == 0.0 {
            opts
        } else {
            opts.starting_at(PicardStart::Offset(self.start_offset))
        }
    }

    pub fn choice(&self) -> SolverChoice {
        match self.mode {
            SolverMode::Direct => SolverChoice::Direct,
            SolverMode::Picard => SolverChoice::Picard(self.picard_options()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payoff {
    BTerminal,
    BTerminalSquare,
    XTerminal,
    XTerminalSquare,
    XSupAbs,
}

impl Payoff {
    pub fn needs_solution(self) -> bool {
        !matches!(self, Self::BTerminal | Self::BTerminalSquare)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderProcess {
    Driver,
    Solution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudyConfig {
    Solve,
    Expect {
        payoff: Payoff,
    },
    Converge,
    Sweep {
        alphas: Vec<f64>,
    },
    Holder {
        process: HolderProcess,
        p: f64,
        #[serde(default)]
        eps_prime: f64,
    },
    Verify,
}

impl StudyConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Expect { .. } => "expect",
            Self::Converge => "converge",
            Self::Sweep { .. } => "sweep",
            Self::Holder { .. } => "holder",
            Self::Verify => "verify",
        }
    }
}

fn default_directory() -> String {
    "gsvie-out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
        }
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).context("malformed config")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    parse(&text).with_context(|| format!("config {}", path.display()))
}

/// Scales the declared Lipschitz witnesses by `k`.
pub fn scale_lipschitz(meta: &mut HypothesisMetadata, k: f64) {
    if let Some(l) = meta.lipschitz_fn.take() {
        meta.lipschitz_fn = Some(Arc::new(move |t, s| k * l(t, s)));
    }
    if let Some(l) = meta.lipschitz_const.as_mut() {
        *l *= k;
    }
}

impl ExperimentConfig {
    pub fn params(&self) -> Result<GParams> {
        GParams::new(self.g.sigma_low, self.g.sigma_high).context("section g")
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.horizon, self.grid.steps).context("section grid")
    }

    pub fn family(&self) -> Result<(CoefficientFamily, HypothesisMetadata)> {
        let p = &self.problem;
        let (family, mut meta) = builtin_family(&p.family, &p.params).context("section problem")?;
        if let Some(class) = p.hypothesis {
            if class != meta.class {
                bail!(
                    "section problem: family `{}` declares hypothesis {:?}, config claims {:?}",
                    p.family,
                    meta.class,
                    class
                );
            }
        }
        let k = p.witnesses.lipschitz_scale;
        if !(k > 0.0 && k.is_finite()) {
            bail!("section problem: witnesses.lipschitz_scale must be finite and > 0, got {k}");
        }
        scale_lipschitz(&mut meta, k);
        meta.validate().context("section problem")?;
        Ok((family, meta))
    }

    pub fn problem(&self) -> Result<VolterraProblem> {
        let (family, meta) = self.family()?;
        let alpha = self.problem.alpha;
        if !alpha.is_finite() {
            bail!("section problem: alpha must be finite, got {alpha}");
        }
        Ok(VolterraProblem::new(family, meta, self.time_grid()?, self.params()?).with_alpha(alpha))
    }

    pub fn ensemble(&self) -> Result<Ensemble> {
        let params = self.params()?;
        let grid = self.time_grid()?;
        let spec = LatticeSpec {
            levels: self.lattice.levels,
            pieces: self.lattice.pieces,
            cap: self.lattice.cap,
        };
        let controls = build_control_lattice(&params, &grid, spec).context("section lattice")?;
        let mc = &self.monte_carlo;
        match Ensemble::generate(params, grid.clone(), controls.clone(), mc.replicas, mc.master_seed) {
            Err(gsvie_core::Error::MemoryBudget { .. }) => {
                Ensemble::streaming(params, grid, controls, mc.replicas, mc.master_seed)
            }
            other => other,
        }
        .context("section monte_carlo")
    }

    /// Checks every section against the library preconditions.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.time_grid()?;
        if self.lattice.levels == 0 || self.lattice.pieces == 0 {
            bail!("section lattice: levels and pieces must be >= 1");
        }
        if self.monte_carlo.replicas == 0 {
            bail!("section monte_carlo: replicas must be >= 1");
        }
        self.problem()?;
        let s = &self.solver;
        if !(s.tol > 0.0) || s.max_iter == 0 || !s.start_offset.is_finite() {
            bail!("section solver: need tol > 0, max_iter >= 1 and a finite start_offset");
        }
        match &self.study {
            StudyConfig::Sweep { alphas } => {
                if alphas.len() < 2 || alphas.iter().any(|a| !a.is_finite()) {
                    bail!("section study: sweep needs at least two finite alphas");
                }
            }
            StudyConfig::Holder { p, eps_prime, .. } => {
                if !(*p > 0.0 && p.is_finite()) || !eps_prime.is_finite() {
                    bail!("section study: holder needs finite p > 0 and finite eps_prime");
                }
            }
            _ => {}
        }
        Ok(())
    }
}
