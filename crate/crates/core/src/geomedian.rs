//! Distributed geometric-median benchmark.
//!
//! Device `m` holds `b_m ~ 𝒩(𝟏, 2I)` and the stacked problem is
//!
//! ```text
//! min_X Σ_m ‖x_m − b_m‖₂ + penalty(X)
//! ```
//!
//! The sum of distances is only available through noisy values: each oracle
//! call perturbs every `b_m` by a fresh `ξ_m ~ 𝒩(0, σ²I)`. The resulting
//! scalar noise has standard deviation close to `σ√M`, which is the value fed
//! to the sliding schedule. The penalty gradient is the communication round.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{ChiSquared, StandardNormal};

use crate::baselines::{self, log_grid, MdConfig, MdVariant, StepSize, TuneOutcome, DEFAULT_ZO_RADIUS};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{FeasibleSet, ProxSetup};
use crate::linalg::{dist2, median, norm2};
use crate::network::{build_gossip, Penalty, PenaltyFactor, PenaltyObjective, Topology};
use crate::par::{self, Exec};
use crate::reference::{block_distance, solve_block_distance, ReferenceOptions};
use crate::rng::{self, derive_seed, Rng, Stream};
use crate::sampling::{NoiseCoupling, SmoothObjective, ValueOracle};
use crate::schedule::DEFAULT_INNER_CAP;
use crate::sliding::{run_opzosa, GradientAnchor, ProblemSpec, RunTrace, SlidingOptions};

/// Fraction of the initial gap used for the communication count.
pub const TARGET_FRACTION: f64 = 0.1;

const TUNE_SEED_OFFSET: u64 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algo {
    Opzosa,
    /// First-order mirror descent with exact subgradients of `f`.
    Md1,
    /// Zeroth-order mirror descent with one-point estimates of `∇f`.
    Md0,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Opzosa, Algo::Md1, Algo::Md0];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Opzosa => "opzosa",
            Algo::Md1 => "md1",
            Algo::Md0 => "md0",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "opzosa" => Ok(Algo::Opzosa),
            "md1" => Ok(Algo::Md1),
            "md0" => Ok(Algo::Md0),
            other => Err(Error::param("algorithm", format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Communication structure of the penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Network {
    /// Server-averaged penalty `(λ/M) Σ ‖x_m − x̄‖²`.
    Centralized,
    Graph(Topology),
}

impl Network {
    pub fn name(self) -> &'static str {
        match self {
            Network::Centralized => "centralized",
            Network::Graph(t) => t.name(),
        }
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Network {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "centralized" {
            Ok(Network::Centralized)
        } else {
            s.parse().map(Network::Graph)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub r: f64,
    pub networks: Vec<Network>,
    pub n_outer: usize,
    /// Mirror-descent iterations; `None` uses `n_outer`.
    pub md_steps: Option<usize>,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algo>,
    pub data_seed: u64,
    pub step_grid: Vec<f64>,
    pub tune_seeds: usize,
    pub inner_cap: u64,
    pub penalty_factor: PenaltyFactor,
    pub anchor: GradientAnchor,
    pub reference_tol: f64,
}

impl ExperimentConfig {
    /// Small instance that runs in CI.
    pub fn desk() -> Self {
        ExperimentConfig {
            n: 20,
            m: 10,
            lambda: 100.0,
            sigma: 0.01,
            r: DEFAULT_ZO_RADIUS,
            networks: Topology::ALL.iter().map(|t| Network::Graph(*t)).collect(),
            n_outer: 400,
            md_steps: Some(2000),
            seeds: (0..5).collect(),
            algorithms: Algo::ALL.to_vec(),
            data_seed: 0,
            step_grid: log_grid(-4, 1),
            tune_seeds: 2,
            inner_cap: DEFAULT_INNER_CAP,
            penalty_factor: PenaltyFactor::ExperimentHalf,
            anchor: GradientAnchor::Extrapolated,
            reference_tol: 1e-9,
        }
    }

    /// Full-size instance with `n = 100`, `M = 50`.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            n: 100,
            m: 50,
            ..Self::desk()
        }
    }

    pub fn md_budget(&self) -> usize {
        self.md_steps.unwrap_or(self.n_outer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if self.m < 2 {
            return Err(Error::param("M", "need at least 2 devices"));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::param("lambda", "penalty weight must be positive"));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::param("sigma", "must be nonnegative"));
        }
        if !(self.r > 0.0) {
            return Err(Error::param("r", "must be positive"));
        }
        if self.networks.is_empty() {
            return Err(Error::param("topologies", "list is empty"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::param("algorithms", "list is empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "list is empty"));
        }
        if self.n_outer == 0 || self.md_budget() == 0 {
            return Err(Error::param("N_outer", "must be at least 1"));
        }
        if self.step_grid.is_empty() || self.step_grid.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::param("step_grid", "needs positive values"));
        }
        if self.tune_seeds == 0 {
            return Err(Error::param("tune_seeds", "must be at least 1"));
        }
        if !(self.reference_tol > 0.0) {
            return Err(Error::param("reference_tol", "must be positive"));
        }
        Ok(())
    }

    /// Seeds used for step-size tuning; disjoint from the run seeds.
    pub fn tuning_seeds(&self) -> Vec<u64> {
        (0..self.tune_seeds as u64)
            .map(|i| derive_seed(self.data_seed ^ TUNE_SEED_OFFSET, i))
            .collect()
    }
}

/// `M` vectors with i.i.d. `𝒩(1, 2)` coordinates, stacked row-major.
pub fn generate_data(m: usize, n: usize, data_seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(data_seed, Stream::Data);
    let sd = 2f64.sqrt();
    (0..m * n)
        .map(|_| 1.0 + sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// `‖x − (b + ξ)‖₂` and the subgradient `(x − b)/‖x − b‖₂` (zero at `x = b`).
pub fn geomedian_local(x: &[f64], b: &[f64], noise: Option<&[f64]>) -> (f64, Vec<f64>) {
    let value = match noise {
        Some(xi) => x
            .iter()
            .zip(b)
            .zip(xi)
            .map(|((x, b), xi)| (x - b - xi).powi(2))
            .sum::<f64>()
            .sqrt(),
        None => dist2(x, b),
    };
    let d = dist2(x, b);
    let sub = if d > 0.0 {
        x.iter().zip(b).map(|(x, b)| (x - b) / d).collect()
    } else {
        vec![0.0; x.len()]
    };
    (value, sub)
}

/// How the per-device noise vectors are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum NoiseDraw {
    /// Every coordinate of every `ξ_m`.
    Full,
    /// Only the law of `‖v − ξ_m‖`: the components of `ξ_m` along the probe
    /// offsets `v = x_m − b_m` plus a `σ²χ²` remainder for the orthogonal
    /// part. Same distribution of values as [`NoiseDraw::Full`] with two or
    /// three draws per device instead of `n`.
    #[default]
    Projected,
}

/// Noisy value oracle for `Σ_m ‖x_m − b_m‖₂` with per-call data noise.
#[derive(Clone, Debug)]
pub struct GeoMedianOracle {
    devices: Devices,
    draw: NoiseDraw,
    noise_plus: Rng,
    noise_minus: Rng,
    xi: Vec<f64>,
    calls: u64,
    subgradient_calls: u64,
}

#[derive(Clone, Debug)]
struct Devices {
    data: Arc<Vec<f64>>,
    m: usize,
    n: usize,
    sigma: f64,
    chi_rest1: Option<ChiSquared<f64>>,
    chi_rest2: Option<ChiSquared<f64>>,
}

fn chi(dof: usize) -> Option<ChiSquared<f64>> {
    (dof > 0).then(|| ChiSquared::new(dof as f64).expect("positive degrees of freedom"))
}

fn sample_chi(d: &Option<ChiSquared<f64>>, rng: &mut Rng) -> f64 {
    d.as_ref().map_or(0.0, |d| rng.sample(d))
}

impl GeoMedianOracle {
    pub fn new(data: Arc<Vec<f64>>, m: usize, n: usize, sigma: f64, seed: u64) -> Result<Self> {
        check_dim(m * n, data.len())?;
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if !(sigma >= 0.0) {
            return Err(Error::param("sigma", "must be nonnegative"));
        }
        Ok(GeoMedianOracle {
            devices: Devices {
                data,
                m,
                n,
                sigma,
                chi_rest1: chi(n - 1),
                chi_rest2: chi(n.saturating_sub(2)),
            },
            draw: NoiseDraw::default(),
            noise_plus: rng::stream(seed, Stream::NoisePlus),
            noise_minus: rng::stream(seed, Stream::NoiseMinus),
            xi: vec![0.0; m * n],
            calls: 0,
            subgradient_calls: 0,
        })
    }

    pub fn with_noise_draw(mut self, draw: NoiseDraw) -> Self {
        self.draw = draw;
        self
    }
}

impl Devices {
    fn exact(&self, x: &[f64]) -> f64 {
        block_distance(x, &self.data, self.n)
    }

    fn draw_full(&self, rng: &mut Rng, xi: &mut [f64]) {
        for v in xi.iter_mut() {
            *v = self.sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }

    fn eval_full(&self, x: &[f64], xi: &[f64]) -> f64 {
        let n = self.n;
        let mut total = 0.0;
        for ((xr, br), xir) in x.chunks_exact(n).zip(self.data.chunks_exact(n)).zip(xi.chunks_exact(n)) {
            let mut sq = 0.0;
            for i in 0..n {
                let d = xr[i] - br[i] - xir[i];
                sq += d * d;
            }
            total += sq.sqrt();
        }
        total
    }

    /// `‖v‖²` and `⟨v, w⟩` for `v = x_m − b_m`, `w = y_m − b_m`.
    fn offsets(&self, x: &[f64], y: Option<&[f64]>, m: usize) -> (f64, f64, f64) {
        let n = self.n;
        let b = &self.data[m * n..(m + 1) * n];
        let xr = &x[m * n..(m + 1) * n];
        let (mut vv, mut vw, mut ww) = (0.0, 0.0, 0.0);
        match y {
            None => {
                for i in 0..n {
                    let v = xr[i] - b[i];
                    vv += v * v;
                }
            }
            Some(y) => {
                let yr = &y[m * n..(m + 1) * n];
                for i in 0..n {
                    let v = xr[i] - b[i];
                    let w = yr[i] - b[i];
                    vv += v * v;
                    vw += v * w;
                    ww += w * w;
                }
            }
        }
        (vv, vw, ww)
    }

    fn eval_projected(&self, x: &[f64], rng: &mut Rng) -> f64 {
        let s = self.sigma;
        (0..self.m)
            .map(|m| {
                let (vv, _, _) = self.offsets(x, None, m);
                let z: f64 = rng.sample(StandardNormal);
                let rest = sample_chi(&self.chi_rest1, rng);
                (vv - 2.0 * s * vv.sqrt() * z + s * s * (z * z + rest)).max(0.0).sqrt()
            })
            .sum()
    }

    /// Both probes see the same `ξ_m`: draw its coordinates in an
    /// orthonormal basis of `span{v, w}` and the remainder as `σ²χ²`.
    fn eval_projected_shared(&self, plus: &[f64], minus: &[f64], rng: &mut Rng) -> (f64, f64) {
        let s = self.sigma;
        let mut fp = 0.0;
        let mut fm = 0.0;
        for m in 0..self.m {
            let (vv, vw, ww) = self.offsets(plus, Some(minus), m);
            let z1: f64 = rng.sample(StandardNormal);
            let (z2, rest) = if self.n >= 2 {
                (rng.sample(StandardNormal), sample_chi(&self.chi_rest2, rng))
            } else {
                (0.0, 0.0)
            };
            let a = vv.sqrt();
            // Coordinates of v and w in the basis.
            let (v1, w1, w2) = if a > 0.0 {
                let p = vw / a;
                (a, p, (ww - p * p).max(0.0).sqrt())
            } else {
                (0.0, ww.sqrt(), 0.0)
            };
            let xi_sq = s * s * (z1 * z1 + z2 * z2 + rest);
            fp += (vv - 2.0 * s * v1 * z1 + xi_sq).max(0.0).sqrt();
            fm += (ww - 2.0 * s * (w1 * z1 + w2 * z2) + xi_sq).max(0.0).sqrt();
        }
        (fp, fm)
    }
}

impl ValueOracle for GeoMedianOracle {
    fn dim(&self) -> usize {
        self.devices.m * self.devices.n
    }

    fn query(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        let dev = &self.devices;
        if dev.sigma == 0.0 {
            return dev.exact(x);
        }
        match self.draw {
            NoiseDraw::Full => {
                dev.draw_full(&mut self.noise_plus, &mut self.xi);
                dev.eval_full(x, &self.xi)
            }
            NoiseDraw::Projected => dev.eval_projected(x, &mut self.noise_plus),
        }
    }

    fn query_pair(&mut self, plus: &[f64], minus: &[f64], coupling: NoiseCoupling) -> (f64, f64) {
        self.calls += 2;
        let dev = &self.devices;
        if dev.sigma == 0.0 {
            return (dev.exact(plus), dev.exact(minus));
        }
        match (self.draw, coupling) {
            (NoiseDraw::Full, _) => {
                dev.draw_full(&mut self.noise_plus, &mut self.xi);
                let fp = dev.eval_full(plus, &self.xi);
                if coupling == NoiseCoupling::Independent {
                    dev.draw_full(&mut self.noise_minus, &mut self.xi);
                }
                (fp, dev.eval_full(minus, &self.xi))
            }
            (NoiseDraw::Projected, NoiseCoupling::Independent) => (
                dev.eval_projected(plus, &mut self.noise_plus),
                dev.eval_projected(minus, &mut self.noise_minus),
            ),
            (NoiseDraw::Projected, NoiseCoupling::Shared) => {
                dev.eval_projected_shared(plus, minus, &mut self.noise_plus)
            }
        }
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn value_exact(&self, x: &[f64]) -> Option<f64> {
        Some(self.devices.exact(x))
    }

    fn subgradient(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.subgradient_calls += 1;
        let n = self.devices.n;
        for ((o, xr), br) in out
            .chunks_exact_mut(n)
            .zip(x.chunks_exact(n))
            .zip(self.devices.data.chunks_exact(n))
        {
            let d = dist2(xr, br);
            for i in 0..n {
                o[i] = if d > 0.0 { (xr[i] - br[i]) / d } else { 0.0 };
            }
        }
        Ok(())
    }

    fn subgradient_calls(&self) -> u64 {
        self.subgradient_calls
    }
}

/// One network instance with its data, penalty and reference optimum.
#[derive(Clone, Debug)]
pub struct BenchProblem {
    pub network: Network,
    pub m: usize,
    pub n: usize,
    pub data: Arc<Vec<f64>>,
    pub penalty: PenaltyObjective,
    /// Radius of each device's ball.
    pub radius: f64,
    pub psi_star: f64,
    pub x_star: Vec<f64>,
}

impl BenchProblem {
    pub fn build(cfg: &ExperimentConfig, network: Network, data: Arc<Vec<f64>>) -> Result<Self> {
        let (m, n) = (cfg.m, cfg.n);
        check_dim(m * n, data.len())?;
        let penalty = match network {
            Network::Centralized => Penalty::Centralized { lambda: cfg.lambda },
            Network::Graph(t) => Penalty::Decentralized {
                lambda: cfg.lambda,
                gossip: Arc::new(build_gossip(t, m)?),
                factor: cfg.penalty_factor,
            },
        };
        let penalty = PenaltyObjective::new(penalty, m, n)?;
        let max_norm = data.chunks_exact(n).map(norm2).fold(0.0, f64::max);
        let radius = 2.0 * max_norm.max(f64::MIN_POSITIVE);
        let reference = solve_block_distance(
            &penalty,
            &data,
            n,
            &vec![0.0; m * n],
            ReferenceOptions {
                tol: cfg.reference_tol,
                ..ReferenceOptions::default()
            },
        )?;
        Ok(BenchProblem {
            network,
            m,
            n,
            data,
            penalty,
            radius,
            psi_star: reference.value,
            x_star: reference.point,
        })
    }

    pub fn dim(&self) -> usize {
        self.m * self.n
    }

    /// Noiseless objective `Ψ₀(X)`.
    pub fn psi0(&self, x: &[f64]) -> f64 {
        block_distance(x, &self.data, self.n) + self.penalty.value(x)
    }

    pub fn gap(&self, x: &[f64]) -> f64 {
        self.psi0(x) - self.psi_star
    }

    /// Fresh problem instance with oracles seeded by `seed`.
    pub fn spec(&self, cfg: &ExperimentConfig, seed: u64) -> Result<ProblemSpec<PenaltyObjective, GeoMedianOracle>> {
        ProblemSpec::new(
            self.penalty.clone(),
            GeoMedianOracle::new(self.data.clone(), self.m, self.n, cfg.sigma, seed)?,
            ProxSetup::euclidean(self.dim()),
            FeasibleSet::ball_product(vec![0.0; self.n], self.radius, self.m)?,
            (self.m as f64).sqrt(),
            cfg.sigma,
            cfg.r,
        )
    }
}

/// Runs one algorithm on one problem from `X = 0`. Mirror descent needs a step.
pub fn run_cell(
    cfg: &ExperimentConfig,
    problem: &BenchProblem,
    algo: Algo,
    seed: u64,
    step: Option<f64>,
) -> Result<RunTrace> {
    let mut spec = problem.spec(cfg, seed)?;
    let mut sphere = rng::stream(seed, Stream::Sphere);
    let x0 = vec![0.0; problem.dim()];
    let probe = |x: &[f64]| problem.gap(x);
    match algo {
        Algo::Opzosa => {
            let options = SlidingOptions {
                anchor: cfg.anchor,
                inner_cap: cfg.inner_cap,
                x0: Some(x0),
            };
            run_opzosa(&mut spec, cfg.n_outer, &mut sphere, &options, Some(&probe))
        }
        Algo::Md1 | Algo::Md0 => {
            let step = step.ok_or_else(|| Error::param("step", "mirror descent needs a step size"))?;
            let variant = if algo == Algo::Md1 {
                MdVariant::FirstOrder
            } else {
                MdVariant::ZerothOrder { r: cfg.r }
            };
            let md = MdConfig {
                step: StepSize::Constant(step),
                steps: cfg.md_budget(),
                variant,
            };
            baselines::run_md(&mut spec, &md, &mut sphere, Some(&x0), Some(&probe))
        }
    }
}

pub fn tune_cell(cfg: &ExperimentConfig, problem: &BenchProblem, algo: Algo, exec: Exec) -> Result<TuneOutcome> {
    baselines::tune_step_size(&cfg.step_grid, &cfg.tuning_seeds(), exec, |step, seed| {
        run_cell(cfg, problem, algo, seed, Some(step))?
            .final_gap()
            .ok_or_else(|| Error::param("gap", "missing gap probe"))
    })
}

#[derive(Clone, Debug)]
pub struct CellResult {
    pub network: Network,
    pub algo: Algo,
    pub seed: u64,
    /// Tuned step for mirror descent.
    pub step: Option<f64>,
    pub outcome: std::result::Result<RunTrace, String>,
}

impl CellResult {
    pub fn run_id(&self) -> String {
        format!("{}-{}-{}", self.network, self.algo, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuningRecord {
    pub network: Network,
    pub algo: Algo,
    pub outcome: std::result::Result<TuneOutcome, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub network: Network,
    pub algo: Algo,
    /// `+∞` when the median run never reaches the target.
    pub median_comm_to_10pct: f64,
    pub median_final_gap: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub tuning: Vec<TuningRecord>,
    pub summary: Vec<SummaryRow>,
    /// `(network, Ψ₀*)` or the reason the reference solve failed.
    pub references: Vec<(Network, std::result::Result<f64, String>)>,
}

impl ExperimentResult {
    pub fn failures(&self) -> impl Iterator<Item = (String, &str)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c.run_id(), e.as_str())))
    }

    pub fn row(&self, network: Network, algo: Algo) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.network == network && r.algo == algo)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentResult> {
    cfg.validate()?;
    let data = Arc::new(generate_data(cfg.m, cfg.n, cfg.data_seed));
    let mut networks = cfg.networks.clone();
    networks.sort();
    networks.dedup();
    let mut algorithms = cfg.algorithms.clone();
    algorithms.sort();
    algorithms.dedup();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();

    let problems: Vec<std::result::Result<BenchProblem, String>> = par::map_slice(exec, &networks, |&net| {
        BenchProblem::build(cfg, net, data.clone()).map_err(|e| e.to_string())
    });
    for (net, p) in networks.iter().zip(&problems) {
        if let Err(e) = p {
            log::error!("reference solve failed for {net}: {e}");
        }
    }

    let tune_jobs: Vec<(usize, Algo)> = (0..networks.len())
        .flat_map(|i| algorithms.iter().filter(|a| **a != Algo::Opzosa).map(move |a| (i, *a)))
        .collect();
    let tuning: Vec<TuningRecord> = par::map_slice(exec, &tune_jobs, |&(i, algo)| {
        let outcome = match &problems[i] {
            Ok(p) => tune_cell(cfg, p, algo, Exec::Sequential).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        TuningRecord {
            network: networks[i],
            algo,
            outcome,
        }
    });
    let step_for = |net: Network, algo: Algo| {
        tuning
            .iter()
            .find(|t| t.network == net && t.algo == algo)
            .and_then(|t| t.outcome.as_ref().ok())
            .map(|o| o.step)
    };

    let cell_jobs: Vec<(usize, Algo, u64)> = (0..networks.len())
        .flat_map(|i| {
            let seeds = &seeds;
            algorithms
                .iter()
                .flat_map(move |a| seeds.iter().map(move |s| (i, *a, *s)))
        })
        .collect();
    let cells: Vec<CellResult> = par::map_slice(exec, &cell_jobs, |&(i, algo, seed)| {
        let net = networks[i];
        let step = step_for(net, algo);
        let outcome = match &problems[i] {
            Ok(p) if algo == Algo::Opzosa || step.is_some() => {
                run_cell(cfg, p, algo, seed, step).map_err(|e| e.to_string())
            }
            Ok(_) => Err("step-size tuning failed".to_string()),
            Err(e) => Err(e.clone()),
        };
        if let Err(e) = &outcome {
            log::error!("{net}-{algo}-{seed}: {e}");
        }
        CellResult {
            network: net,
            algo,
            seed,
            step,
            outcome,
        }
    });

    let mut summary = Vec::new();
    for &net in &networks {
        for &algo in &algorithms {
            let traces: Vec<&RunTrace> = cells
                .iter()
                .filter(|c| c.network == net && c.algo == algo)
                .filter_map(|c| c.outcome.as_ref().ok())
                .collect();
            if traces.is_empty() {
                continue;
            }
            let comm: Vec<f64> = traces
                .iter()
                .map(|t| t.comm_to_fraction(TARGET_FRACTION).map_or(f64::INFINITY, |c| c as f64))
                .collect();
            let finals: Vec<f64> = traces.iter().map(|t| t.final_gap().unwrap_or(f64::NAN)).collect();
            summary.push(SummaryRow {
                network: net,
                algo,
                median_comm_to_10pct: median(&comm),
                median_final_gap: median(&finals),
            });
        }
    }

    let references = networks
        .iter()
        .zip(&problems)
        .map(|(n, p)| (*n, p.as_ref().map(|p| p.psi_star).map_err(|e| e.clone())))
        .collect();
    Ok(ExperimentResult {
        cells,
        tuning,
        summary,
        references,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mean;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn data_moments() {
        let b = generate_data(50, 100, 3);
        let m = mean(&b);
        assert!((m - 1.0).abs() <= 3.0 * 2f64.sqrt() / 5000f64.sqrt());
        let var = b.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b.len() - 1) as f64;
        assert!((var - 2.0).abs() <= 0.2);
        assert_eq!(b, generate_data(50, 100, 3));
        assert_ne!(b, generate_data(50, 100, 4));
    }

    #[test]
    fn local_term_examples() {
        let (v, g) = geomedian_local(&[1.0, 2.0], &[1.0, 2.0], None);
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let (v, g) = geomedian_local(&[3.0, 4.0], &[0.0, 0.0], Some(&[0.0, 0.0]));
        assert_eq!(v, 5.0);
        assert_eq!(g, vec![0.6, 0.8]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (_, g) = geomedian_local(&x, &b, None);
            assert!(norm2(&g) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn oracle_noise_and_counters() {
        let data = Arc::new(generate_data(3, 4, 1));
        let x = vec![0.5; 12];
        let mut clean = GeoMedianOracle::new(data.clone(), 3, 4, 0.0, 9).unwrap();
        let exact = clean.value_exact(&x).unwrap();
        assert_eq!(clean.query(&x), exact);
        let (p, m) = clean.query_pair(&x, &x, NoiseCoupling::Independent);
        assert_eq!((p, m), (exact, exact));
        assert_eq!(clean.calls(), 3);

        for draw in [NoiseDraw::Full, NoiseDraw::Projected] {
            let mut noisy = GeoMedianOracle::new(data.clone(), 3, 4, 0.1, 9)
                .unwrap()
                .with_noise_draw(draw);
            let (p, m) = noisy.query_pair(&x, &x, NoiseCoupling::Shared);
            assert!((p - m).abs() <= 1e-9 * p, "{draw:?}");
            let (p, m) = noisy.query_pair(&x, &x, NoiseCoupling::Independent);
            assert_ne!(p, m);
            assert_eq!(noisy.calls(), 4);
        }
    }

    fn value_moments(draw: NoiseDraw, coupling: NoiseCoupling, n: usize) -> [f64; 4] {
        let m = 2;
        let data = Arc::new(generate_data(m, n, 2));
        let mut o = GeoMedianOracle::new(data, m, n, 0.3, 17).unwrap().with_noise_draw(draw);
        let plus: Vec<f64> = (0..m * n).map(|i| 0.2 * i as f64).collect();
        let minus: Vec<f64> = (0..m * n).map(|i| 1.0 - 0.1 * i as f64).collect();
        let k = 200_000;
        let mut acc = [0.0; 4];
        for _ in 0..k {
            let (a, b) = o.query_pair(&plus, &minus, coupling);
            acc[0] += a;
            acc[1] += b;
            acc[2] += a * a;
            acc[3] += a * b;
        }
        acc.map(|v| v / k as f64)
    }

    #[test]
    fn projected_noise_matches_full_noise_in_law() {
        for n in [1, 2, 5] {
            for coupling in [NoiseCoupling::Independent, NoiseCoupling::Shared] {
                let full = value_moments(NoiseDraw::Full, coupling, n);
                let proj = value_moments(NoiseDraw::Projected, coupling, n);
                for (f, p) in full.iter().zip(&proj) {
                    assert!(
                        (f - p).abs() <= 5e-3 * f.abs().max(1.0),
                        "n={n} {coupling:?}: {full:?} vs {proj:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::desk();
        cfg.validate().unwrap();
        assert_eq!(cfg.md_budget(), 2000);
        cfg.md_steps = None;
        assert_eq!(cfg.md_budget(), cfg.n_outer);
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
        let seeds = ExperimentConfig::desk().tuning_seeds();
        assert!(seeds.iter().all(|s| !ExperimentConfig::desk().seeds.contains(s)));
    }

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            n: 3,
            m: 4,
            lambda: 5.0,
            n_outer: 6,
            md_steps: None,
            seeds: vec![0, 1],
            step_grid: vec![1e-3, 1e-2, 1e-1],
            tune_seeds: 1,
            inner_cap: 2000,
            ..ExperimentConfig::desk()
        }
    }

    #[test]
    fn counters_per_algorithm() {
        let mut cfg = tiny();
        cfg.md_steps = Some(9);
        let res = run_experiment(&cfg, Exec::Parallel).unwrap();
        assert_eq!(res.cells.len(), 4 * 3 * 2);
        assert_eq!(res.failures().count(), 0);
        for c in &res.cells {
            let t = c.outcome.as_ref().unwrap();
            let expected = if c.algo == Algo::Opzosa { 6 } else { 9 };
            assert_eq!(t.last().unwrap().grad_g_calls, expected);
            assert!(t.records.windows(2).all(|w| w[0].grad_g_calls < w[1].grad_g_calls));
        }
        assert_eq!(res.summary.len(), 4 * 3);
    }

    #[test]
    fn sweep_is_deterministic_across_exec_modes() {
        let cfg = ExperimentConfig {
            networks: vec![Network::Graph(Topology::Cycle), Network::Centralized],
            ..tiny()
        };
        let a = run_experiment(&cfg, Exec::Parallel).unwrap();
        let b = run_experiment(&cfg, Exec::Sequential).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            let (tx, ty) = (x.outcome.as_ref().unwrap(), y.outcome.as_ref().unwrap());
            assert_eq!(tx.final_point, ty.final_point);
            let gaps = |t: &RunTrace| t.records.iter().map(|r| r.psi0_gap).collect::<Vec<_>>();
            assert_eq!(gaps(tx), gaps(ty));
        }
        assert_eq!(a.summary, b.summary);
    }

    #[test]
    fn complete_graph_matches_centralized_with_rescaled_weight() {
        // (λ/M)Σ‖x_m − x̄‖² = (λ'/2) tr(XᵀL_K X) when λ' = 2λ/M².
        let base = tiny();
        let m = base.m as f64;
        let central =
            BenchProblem::build(&base, Network::Centralized, Arc::new(generate_data(base.m, base.n, 0))).unwrap();
        let cfg_k = ExperimentConfig {
            lambda: 2.0 * base.lambda / (m * m),
            ..base.clone()
        };
        let complete = BenchProblem::build(
            &cfg_k,
            Network::Graph(Topology::Complete),
            Arc::new(generate_data(base.m, base.n, 0)),
        )
        .unwrap();
        assert!((central.psi_star - complete.psi_star).abs() < 1e-8);
        let a = run_cell(&base, &central, Algo::Opzosa, 3, None).unwrap();
        let b = run_cell(&cfg_k, &complete, Algo::Opzosa, 3, None).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.f_calls, y.f_calls);
            assert!((x.psi0_gap.unwrap() - y.psi0_gap.unwrap()).abs() < 1e-6);
        }
    }
}
