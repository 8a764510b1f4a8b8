//! Volatility-uncertainty model: the band `[sigma_low, sigma_high]`, uniform
//! time grids, piecewise-constant variance controls and the sampled
//! G-Brownian scenarios built from them.
//!
//! A control fixes the quadratic-variation density `lambda_j` on every grid
//! interval; a scenario is one Gaussian path under that control with
//! `dB_j = sqrt(lambda_j) dW_j` and `d<B>_j = lambda_j dt`. Replica `m` reuses
//! the same `dW` under every control (common random numbers).

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

pub const DEFAULT_LATTICE_CAP: usize = 4096;

/// Noise storage budget used by [`Ensemble::generate`] (1 GiB).
pub const DEFAULT_NOISE_BUDGET: usize = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GParams {
    sigma_low: f64,
    sigma_high: f64,
}

impl GParams {
    pub fn new(sigma_low: f64, sigma_high: f64) -> Result<Self> {
        let ok = sigma_low.is_finite()
            && sigma_high.is_finite()
            && sigma_low > 0.0
            && sigma_low <= sigma_high;
        if !ok {
            return Err(Error::InvalidBand {
                low: sigma_low,
                high: sigma_high,
            });
        }
        Ok(Self {
            sigma_low,
            sigma_high,
        })
    }

    pub fn sigma_low(&self) -> f64 {
        self.sigma_low
    }

    pub fn sigma_high(&self) -> f64 {
        self.sigma_high
    }

    /// Lower variance density `sigma_low^2`.
    pub fn var_low(&self) -> f64 {
        self.sigma_low * self.sigma_low
    }

    /// Upper variance density `sigma_high^2`.
    pub fn var_high(&self) -> f64 {
        self.sigma_high * self.sigma_high
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma_low == self.sigma_high
    }
}

/// The generator `G(x) = (sigma_high^2 x^+ - sigma_low^2 x^-) / 2`.
pub fn g_function(x: f64, params: &GParams) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite {
            what: "G argument",
            value: x,
        });
    }
    Ok(0.5 * (params.var_high() * x.max(0.0) - params.var_low() * (-x).max(0.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || steps == 0 {
            return Err(Error::InvalidGrid { horizon, steps });
        }
        let n = steps as f64;
        let times = (0..=steps).map(|i| i as f64 * horizon / n).collect();
        Ok(Self {
            horizon,
            steps,
            dt: horizon / n,
            times,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `t_0 = 0 < t_1 < ... < t_N = T`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }
}

/// Per-interval quadratic-variation densities `lambda_j`, `j = 0..N`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolatilityControl {
    densities: Vec<f64>,
}

impl VolatilityControl {
    /// Validates `sigma_low^2 <= lambda_j <= sigma_high^2` for every interval.
    pub fn new(densities: Vec<f64>, params: &GParams) -> Result<Self> {
        let (low, high) = (params.var_low(), params.var_high());
        for (index, &value) in densities.iter().enumerate() {
            if !(low..=high).contains(&value) {
                return Err(Error::ControlOutOfBand {
                    index,
                    value,
                    low,
                    high,
                });
            }
        }
        Ok(Self { densities })
    }

    pub fn constant(value: f64, grid: &TimeGrid, params: &GParams) -> Result<Self> {
        Self::new(vec![value; grid.steps()], params)
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn density(&self, j: usize) -> f64 {
        self.densities[j]
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.len() != grid.steps() {
            return Err(Error::LengthMismatch {
                what: "control densities vs grid intervals",
                expected: grid.steps(),
                actual: self.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub levels: usize,
    pub pieces: usize,
    pub cap: usize,
}

impl LatticeSpec {
    pub fn new(levels: usize, pieces: usize) -> Self {
        Self {
            levels,
            pieces,
            cap: DEFAULT_LATTICE_CAP,
        }
    }
}

/// Piecewise-constant controls on `pieces` blocks of the grid (the last block
/// absorbs the remainder), each block taking one of `levels` equally spaced
/// densities in `[sigma_low^2, sigma_high^2]`.
///
/// Order is lexicographic with block 0 most significant, so the constant
/// lower control comes first and the constant upper control last. Identical
/// controls (degenerate band) are removed.
pub fn build_control_lattice(
    params: &GParams,
    grid: &TimeGrid,
    spec: LatticeSpec,
) -> Result<Vec<VolatilityControl>> {
    let LatticeSpec { levels, pieces, cap } = spec;
    if pieces == 0 || pieces > grid.steps() {
        return Err(Error::InvalidLattice(format!(
            "pieces must lie in 1..={}, got {pieces}",
            grid.steps()
        )));
    }
    if levels == 0 {
        return Err(Error::InvalidLattice("levels must be >= 1".into()));
    }
    if levels == 1 && !params.is_degenerate() {
        return Err(Error::InvalidLattice(
            "a single level cannot contain both constant extremes of a non-degenerate band".into(),
        ));
    }
    let requested = (levels as u128)
        .checked_pow(pieces as u32)
        .unwrap_or(u128::MAX);
    if requested > cap as u128 {
        return Err(Error::LatticeTooLarge { requested, cap });
    }

    let (low, high) = (params.var_low(), params.var_high());
    let values: Vec<f64> = (0..levels)
        .map(|k| {
            if k + 1 == levels {
                high
            } else if levels == 1 {
                low
            } else {
                (low + (high - low) * k as f64 / (levels - 1) as f64).clamp(low, high)
            }
        })
        .collect();

    let block = grid.steps() / pieces;
    let block_of = |j: usize| (j / block).min(pieces - 1);

    let mut controls: Vec<VolatilityControl> = Vec::with_capacity(requested as usize);
    let mut digits = vec![0usize; pieces];
    for _ in 0..requested {
        let densities: Vec<f64> = (0..grid.steps())
            .map(|j| values[digits[block_of(j)]])
            .collect();
        if !controls.iter().any(|c| c.densities == densities) {
            controls.push(VolatilityControl { densities });
        }
        // odometer increment, last block least significant
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < levels {
                break;
            }
            *d = 0;
        }
    }
    Ok(controls)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ScenarioKey {
    pub control: usize,
    pub replica: usize,
}

/// One sampled path under one control.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    key: ScenarioKey,
    stream: StreamKey,
    control: Arc<VolatilityControl>,
    dt: f64,
    dw: Arc<[f64]>,
    db: Vec<f64>,
    dqv: Vec<f64>,
}

impl Scenario {
    fn assemble(
        key: ScenarioKey,
        stream: StreamKey,
        control: Arc<VolatilityControl>,
        dt: f64,
        dw: Arc<[f64]>,
    ) -> Self {
        let db = dw
            .iter()
            .zip(control.densities())
            .map(|(w, &l)| l.sqrt() * w)
            .collect();
        let dqv = control.densities().iter().map(|&l| l * dt).collect();
        Self {
            key,
            stream,
            control,
            dt,
            dw,
            db,
            dqv,
        }
    }

    pub fn key(&self) -> ScenarioKey {
        self.key
    }

    pub fn stream(&self) -> StreamKey {
        self.stream
    }

    pub fn control(&self) -> &VolatilityControl {
        &self.control
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.dw.len()
    }

    /// Standard Brownian increments, `N(0, dt)`.
    pub fn dw(&self) -> &[f64] {
        &self.dw
    }

    /// G-Brownian increments `sqrt(lambda_j) dW_j`.
    pub fn db(&self) -> &[f64] {
        &self.db
    }

    /// Quadratic-variation increments `lambda_j dt`.
    pub fn dqv(&self) -> &[f64] {
        &self.dqv
    }

    /// `B(t_i)`, `i = 0..=N`, starting at 0.
    pub fn driver_path(&self) -> Vec<f64> {
        cumulative(&self.db)
    }

    /// `<B>(t_i)`, `i = 0..=N`.
    pub fn quadratic_variation_path(&self) -> Vec<f64> {
        cumulative(&self.dqv)
    }
}

fn cumulative(increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for &d in increments {
        acc += d;
        out.push(acc);
    }
    out
}

fn replica_noise(grid: &TimeGrid, master_seed: u64, replica: usize) -> Arc<[f64]> {
    let scale = grid.dt().sqrt();
    StreamKey::new(master_seed, replica as u64)
        .normals(grid.steps())
        .into_iter()
        .map(|z| z * scale)
        .collect()
}

/// Samples replica `replica` of `master_seed` under `control`. Bit-identical
/// on re-invocation.
pub fn simulate_scenario(
    control: &VolatilityControl,
    grid: &TimeGrid,
    master_seed: u64,
    replica: usize,
) -> Result<Scenario> {
    control.check_grid(grid)?;
    Ok(Scenario::assemble(
        ScenarioKey {
            control: 0,
            replica,
        },
        StreamKey::new(master_seed, replica as u64),
        Arc::new(control.clone()),
        grid.dt(),
        replica_noise(grid, master_seed, replica),
    ))
}

#[derive(Debug, Clone)]
enum NoiseStore {
    Stored(Vec<Arc<[f64]>>),
    Streamed,
}

/// Controls x replicas, with scenario index `control * replicas + replica`.
///
/// Only the per-replica `dW` paths are stored; scenarios are assembled on
/// demand. In streaming mode even the noise is regenerated from the keyed
/// stream on every access.
#[derive(Debug, Clone)]
pub struct Ensemble {
    params: GParams,
    grid: TimeGrid,
    controls: Vec<Arc<VolatilityControl>>,
    replicas: usize,
    master_seed: u64,
    noise: NoiseStore,
}

impl Ensemble {
    pub fn generate(
        params: GParams,
        grid: TimeGrid,
        controls: Vec<VolatilityControl>,
        replicas: usize,
        master_seed: u64,
    ) -> Result<Self> {
        Self::generate_with_budget(
            params,
            grid,
            controls,
            replicas,
            master_seed,
            DEFAULT_NOISE_BUDGET,
        )
    }

    /// Fails with [`Error::MemoryBudget`] when the stored noise would exceed
    /// `budget_bytes`.
    pub fn generate_with_budget(
        params: GParams,
        grid: TimeGrid,
        controls: Vec<VolatilityControl>,
        replicas: usize,
        master_seed: u64,
        budget_bytes: usize,
    ) -> Result<Self> {
        let required = replicas as u128 * grid.steps() as u128 * 8;
        if required > budget_bytes as u128 {
            return Err(Error::MemoryBudget {
                required,
                budget: budget_bytes,
            });
        }
        let mut ensemble = Self::streaming(params, grid, controls, replicas, master_seed)?;
        let noise = (0..replicas)
            .into_par_iter()
            .map(|m| replica_noise(&ensemble.grid, master_seed, m))
            .collect();
        ensemble.noise = NoiseStore::Stored(noise);
        Ok(ensemble)
    }

    /// Same scenarios as [`Self::generate`], without storing any noise.
    pub fn streaming(
        params: GParams,
        grid: TimeGrid,
        controls: Vec<VolatilityControl>,
        replicas: usize,
        master_seed: u64,
    ) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::InvalidArgument("replicas must be >= 1".into()));
        }
        if controls.is_empty() {
            return Err(Error::InvalidArgument("at least one control is required".into()));
        }
        for c in &controls {
            c.check_grid(&grid)?;
            // re-validate against this band
            VolatilityControl::new(c.densities.clone(), &params)?;
        }
        Ok(Self {
            params,
            grid,
            controls: controls.into_iter().map(Arc::new).collect(),
            replicas,
            master_seed,
            noise: NoiseStore::Streamed,
        })
    }

    /// Ensemble over explicit `dW` paths (one per replica), for purpose-built
    /// test configurations.
    pub fn from_noise(
        params: GParams,
        grid: TimeGrid,
        controls: Vec<VolatilityControl>,
        noise: Vec<Vec<f64>>,
    ) -> Result<Self> {
        for path in &noise {
            if path.len() != grid.steps() {
                return Err(Error::LengthMismatch {
                    what: "noise path vs grid intervals",
                    expected: grid.steps(),
                    actual: path.len(),
                });
            }
        }
        let replicas = noise.len();
        let mut ensemble = Self::streaming(params, grid, controls, replicas, 0)?;
        ensemble.noise = NoiseStore::Stored(noise.into_iter().map(Arc::from).collect());
        Ok(ensemble)
    }

    /// Pairs of replicas that share their first `k` noise increments and
    /// differ afterwards, one pair per entry of `branch_points`. Used to probe
    /// adaptedness.
    pub fn branching(
        params: GParams,
        grid: TimeGrid,
        controls: Vec<VolatilityControl>,
        master_seed: u64,
        branch_points: &[usize],
    ) -> Result<Self> {
        let mut noise = Vec::with_capacity(2 * branch_points.len());
        for (q, &k) in branch_points.iter().enumerate() {
            if k > grid.steps() {
                return Err(Error::InvalidArgument(format!(
                    "branch point {k} beyond {} steps",
                    grid.steps()
                )));
            }
            let base = replica_noise(&grid, master_seed, 2 * q).to_vec();
            let mut twin = replica_noise(&grid, master_seed, 2 * q + 1).to_vec();
            twin[..k].copy_from_slice(&base[..k]);
            noise.push(base);
            noise.push(twin);
        }
        let mut ensemble = Self::from_noise(params, grid, controls, noise)?;
        ensemble.master_seed = master_seed;
        Ok(ensemble)
    }

    /// The same Brownian paths on a grid `factor` times coarser: each coarse
    /// `dW` is the sum of `factor` consecutive fine increments. Every control
    /// must be constant on each block.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let n = self.grid.steps();
        if factor == 0 || n % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "coarsening factor {factor} must divide the {n} steps"
            )));
        }
        let grid = TimeGrid::new(self.grid.horizon(), n / factor)?;
        let controls = self
            .controls
            .iter()
            .map(|c| {
                let d = c.densities();
                if d.chunks(factor).any(|b| b.iter().any(|&v| v != b[0])) {
                    return Err(Error::InvalidLattice(
                        "control varies inside a coarsening block".into(),
                    ));
                }
                VolatilityControl::new(d.iter().step_by(factor).copied().collect(), &self.params)
            })
            .collect::<Result<Vec<_>>>()?;
        let noise = (0..self.replicas)
            .map(|m| {
                self.noise(m)
                    .chunks(factor)
                    .map(|b| b.iter().sum::<f64>())
                    .collect()
            })
            .collect();
        let mut coarse = Self::from_noise(self.params, grid, controls, noise)?;
        coarse.master_seed = self.master_seed;
        Ok(coarse)
    }

    pub fn params(&self) -> &GParams {
        &self.params
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn controls(&self) -> &[Arc<VolatilityControl>] {
        &self.controls
    }

    pub fn control_count(&self) -> usize {
        self.controls.len()
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn len(&self) -> usize {
        self.controls.len() * self.replicas
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_streaming(&self) -> bool {
        matches!(self.noise, NoiseStore::Streamed)
    }

    pub fn index(&self, control: usize, replica: usize) -> usize {
        control * self.replicas + replica
    }

    pub fn key(&self, index: usize) -> ScenarioKey {
        ScenarioKey {
            control: index / self.replicas,
            replica: index % self.replicas,
        }
    }

    /// `dW` path of a replica, shared by every control.
    pub fn noise(&self, replica: usize) -> Arc<[f64]> {
        match &self.noise {
            NoiseStore::Stored(paths) => paths[replica].clone(),
            NoiseStore::Streamed => replica_noise(&self.grid, self.master_seed, replica),
        }
    }

    pub fn scenario(&self, index: usize) -> Scenario {
        let key = self.key(index);
        Scenario::assemble(
            key,
            StreamKey::new(self.master_seed, key.replica as u64),
            self.controls[key.control].clone(),
            self.grid.dt(),
            self.noise(key.replica),
        )
    }

    /// Applies `f` to every scenario in index order. Runs in parallel; the
    /// output order never depends on the thread count.
    pub fn map_scenarios<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&Scenario) -> T + Sync + Send,
    {
        (0..self.len())
            .into_par_iter()
            .map(|k| f(&self.scenario(k)))
            .collect()
    }

    pub fn try_map_scenarios<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&Scenario) -> Result<T> + Sync + Send,
    {
        (0..self.len())
            .into_par_iter()
            .map(|k| f(&self.scenario(k)))
            .collect()
    }
}
