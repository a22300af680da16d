//! Plain-text configuration.
//!
//! One `key = value` pair per line. Keys are dotted (`solver.N`); a
//! `[section]` header prefixes the keys that follow it. `#` starts a comment.
//! Unknown keys are errors. Overrides (`key=value` strings) are applied after
//! the file and the last assignment of a key wins.
//!
//! Single runs read `problem.*` and `solver.*`:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `problem.kind` | `desk` | `desk` or `geomedian` |
//! | `problem.n` | 2 (desk), 20 (geomedian) | dimension per device |
//! | `problem.geometry` | `euclidean` | `euclidean` or `entropy` (desk only) |
//! | `problem.smoothness` | 1 | `L` of the desk quadratic |
//! | `problem.radius` | 1 | radius of the desk ball |
//! | `problem.g_bound` | 1 (desk), √M (geomedian) | `G` used by the schedule |
//! | `problem.sigma` | 0 (desk), 0.01 (geomedian) | noise level |
//! | `problem.r` | 1e-3 (desk), 1e-2 (geomedian) | smoothing radius |
//! | `problem.M` | 10 | devices |
//! | `problem.lambda` | 100 | penalty weight |
//! | `problem.topology` | `star` | `star`, `cycle`, `chain`, `complete` or `centralized` |
//! | `problem.penalty_factor` | required for graphs | `paper_eq3` or `experiment_half` |
//! | `problem.data_seed` | 0 | seed of the data |
//! | `solver.algo` | `opzosa` | `opzosa`, `md1` or `md0` |
//! | `solver.N` | 20 | outer iterations (or mirror-descent steps) |
//! | `solver.anchor` | `extrapolated` | `extrapolated` or `literal` |
//! | `solver.inner_cap` | 1000000 | cap on inner iterations per outer step |
//! | `solver.step` | required for `md*` | mirror-descent step size |
//! | `solver.seed` | 0 | run seed |
//!
//! Sweeps read `bench.*`: `scale` (`desk` or `full`, sets the defaults), `n`,
//! `M`, `lambda`, `sigma`, `r`, `topologies`, `algorithms`, `N_outer`,
//! `md_steps`, `seeds` (count), `seed` (first seed), `data_seed`,
//! `step_grid`, `tune_seeds`, `inner_cap`, `penalty_factor`, `anchor`,
//! `reference_tol`. Lists are comma-separated.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::{run_md, MdConfig, MdVariant, StepSize};
use crate::desk::DeskProblem;
use crate::error::{Error, Result};
use crate::geomedian::{self, Algo, BenchProblem, ExperimentConfig, Network};
use crate::geometry::NormKind;
use crate::network::PenaltyFactor;
use crate::report::RunLabel;
use crate::rng::{self, Stream};
use crate::schedule::DEFAULT_INNER_CAP;
use crate::sliding::{run_opzosa, GradientAnchor, RunTrace, SlidingOptions};

const RUN_KEYS: &[&str] = &[
    "problem.kind",
    "problem.n",
    "problem.geometry",
    "problem.smoothness",
    "problem.radius",
    "problem.g_bound",
    "problem.sigma",
    "problem.r",
    "problem.M",
    "problem.lambda",
    "problem.topology",
    "problem.penalty_factor",
    "problem.data_seed",
    "solver.algo",
    "solver.N",
    "solver.anchor",
    "solver.inner_cap",
    "solver.step",
    "solver.seed",
];

const BENCH_KEYS: &[&str] = &[
    "bench.scale",
    "bench.n",
    "bench.M",
    "bench.lambda",
    "bench.sigma",
    "bench.r",
    "bench.topologies",
    "bench.algorithms",
    "bench.N_outer",
    "bench.md_steps",
    "bench.seeds",
    "bench.seed",
    "bench.data_seed",
    "bench.step_grid",
    "bench.tune_seeds",
    "bench.inner_cap",
    "bench.penalty_factor",
    "bench.anchor",
    "bench.reference_tol",
];

fn is_known(key: &str) -> bool {
    RUN_KEYS.contains(&key) || BENCH_KEYS.contains(&key)
}

/// Parsed but untyped key/value pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(line, format!("line {}: unterminated section header", lineno + 1)))?
                    .trim();
                section = if name.is_empty() {
                    String::new()
                } else {
                    format!("{name}.")
                };
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("line {}: expected key = value", lineno + 1)))?;
            raw.set(&format!("{section}{}", key.trim()), value.trim())?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read file: {e}")))?;
        Self::parse(&text)
    }

    /// Reads `path` if given and applies `overrides` on top.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut raw = match path {
            Some(p) => Self::load(p)?,
            None => RawConfig::default(),
        };
        for o in overrides {
            raw.apply_override(o)?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !is_known(key) {
            return Err(Error::config(key, "unknown key"));
        }
        if value.is_empty() {
            return Err(Error::config(key, "empty value"));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(pair, "override must look like key=value"))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn has_section(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::config(key, format!("cannot parse {v:?}: {e}"))),
        }
    }

    fn get_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn get_list<T>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|e| Error::config(key, format!("cannot parse {s:?}: {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be nonnegative, got {v}")))
    }
}

fn at_least(key: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be at least {min}, got {v}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemKind {
    Desk,
    Geomedian,
}

impl FromStr for ProblemKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(ProblemKind::Desk),
            "geomedian" => Ok(ProblemKind::Geomedian),
            _ => Err("expected desk or geomedian".into()),
        }
    }
}

fn parse_geometry(key: &str, s: &str) -> Result<NormKind> {
    match s {
        "euclidean" => Ok(NormKind::Euclidean),
        "entropy" => Ok(NormKind::L1Entropy),
        _ => Err(Error::config(key, format!("expected euclidean or entropy, got {s:?}"))),
    }
}

fn parse_anchor(key: &str, s: &str) -> Result<GradientAnchor> {
    match s {
        "extrapolated" => Ok(GradientAnchor::Extrapolated),
        "literal" => Ok(GradientAnchor::Literal),
        _ => Err(Error::config(
            key,
            format!("expected extrapolated or literal, got {s:?}"),
        )),
    }
}

/// A fully validated single run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub kind: ProblemKind,
    pub n: usize,
    pub geometry: NormKind,
    pub smoothness: f64,
    pub radius: f64,
    pub g_bound: Option<f64>,
    pub sigma: f64,
    pub r: f64,
    pub m: usize,
    pub lambda: f64,
    pub network: Network,
    pub penalty_factor: Option<PenaltyFactor>,
    pub data_seed: u64,
    pub algo: Algo,
    pub iterations: usize,
    pub anchor: GradientAnchor,
    pub inner_cap: u64,
    pub step: Option<f64>,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        if let Some(k) = raw.entries.keys().find(|k| k.starts_with("bench.")) {
            return Err(Error::config(k.as_str(), "bench keys are not used by single runs"));
        }
        let kind: ProblemKind = raw.get_or("problem.kind", ProblemKind::Desk)?;
        let desk = kind == ProblemKind::Desk;
        let n = at_least(
            "problem.n",
            raw.get_or("problem.n", if desk { 2 } else { 20 })?,
            if desk { 2 } else { 1 },
        )?;
        let geometry = match raw.get_str("problem.geometry") {
            Some(s) => parse_geometry("problem.geometry", s)?,
            None => NormKind::Euclidean,
        };
        if !desk && geometry != NormKind::Euclidean {
            return Err(Error::config(
                "problem.geometry",
                "geomedian runs use the euclidean geometry",
            ));
        }
        let smoothness = positive("problem.smoothness", raw.get_or("problem.smoothness", 1.0)?)?;
        let radius = positive("problem.radius", raw.get_or("problem.radius", 1.0)?)?;
        let g_bound = raw
            .get::<f64>("problem.g_bound")?
            .map(|g| positive("problem.g_bound", g))
            .transpose()?;
        let sigma = nonnegative(
            "problem.sigma",
            raw.get_or("problem.sigma", if desk { 0.0 } else { 0.01 })?,
        )?;
        let r = positive("problem.r", raw.get_or("problem.r", if desk { 1e-3 } else { 1e-2 })?)?;
        let m = at_least("problem.M", raw.get_or("problem.M", 10)?, 2)?;
        let lambda = positive("problem.lambda", raw.get_or("problem.lambda", 100.0)?)?;
        let network: Network = raw.get_or("problem.topology", Network::Graph(crate::network::Topology::Star))?;
        let penalty_factor: Option<PenaltyFactor> = raw.get("problem.penalty_factor")?;
        if !desk && penalty_factor.is_none() && network != Network::Centralized {
            return Err(Error::config(
                "problem.penalty_factor",
                "required for decentralized penalties (paper_eq3 or experiment_half)",
            ));
        }
        let data_seed = raw.get_or("problem.data_seed", 0)?;
        let algo: Algo = raw.get_or("solver.algo", Algo::Opzosa)?;
        let iterations = at_least("solver.N", raw.get_or("solver.N", 20)?, 1)?;
        let anchor = match raw.get_str("solver.anchor") {
            Some(s) => parse_anchor("solver.anchor", s)?,
            None => GradientAnchor::Extrapolated,
        };
        let inner_cap: u64 = raw.get_or("solver.inner_cap", DEFAULT_INNER_CAP)?;
        if inner_cap == 0 {
            return Err(Error::config("solver.inner_cap", "must be at least 1"));
        }
        let step = raw
            .get::<f64>("solver.step")?
            .map(|s| positive("solver.step", s))
            .transpose()?;
        if algo != Algo::Opzosa && step.is_none() {
            return Err(Error::config("solver.step", "mirror descent needs a step size"));
        }
        let seed = raw.get_or("solver.seed", 0)?;
        Ok(RunConfig {
            kind,
            n,
            geometry,
            smoothness,
            radius,
            g_bound,
            sigma,
            r,
            m,
            lambda,
            network,
            penalty_factor,
            data_seed,
            algo,
            iterations,
            anchor,
            inner_cap,
            step,
            seed,
        })
    }

    pub fn label(&self) -> RunLabel {
        let topology = match self.kind {
            ProblemKind::Desk => "none".to_string(),
            ProblemKind::Geomedian => self.network.to_string(),
        };
        let problem = match self.kind {
            ProblemKind::Desk => "desk",
            ProblemKind::Geomedian => "geomedian",
        };
        RunLabel {
            run_id: format!("{problem}-{topology}-{}-{}", self.algo, self.seed),
            algo: self.algo.to_string(),
            topology,
            seed: self.seed,
        }
    }

    fn md_config(&self) -> MdConfig {
        MdConfig {
            step: StepSize::Constant(self.step.unwrap_or(1.0)),
            steps: self.iterations,
            variant: if self.algo == Algo::Md1 {
                MdVariant::FirstOrder
            } else {
                MdVariant::ZerothOrder { r: self.r }
            },
        }
    }

    pub fn execute(&self) -> Result<RunTrace> {
        let mut sphere = rng::stream(self.seed, Stream::Sphere);
        match self.kind {
            ProblemKind::Desk => {
                let desk = DeskProblem::new(self.geometry, self.n, self.smoothness, self.radius)?;
                let mut spec = desk.spec(self.sigma, self.r, self.seed)?;
                if let Some(g) = self.g_bound {
                    spec.g_bound = g;
                }
                let optimum = desk.optimum();
                let probe = optimum.as_ref().map(|(_, v)| {
                    let v = *v;
                    let d = desk.clone();
                    move |x: &[f64]| d.psi0(x) - v
                });
                let probe_ref = probe.as_ref().map(|p| p as &(dyn Fn(&[f64]) -> f64 + Sync));
                match self.algo {
                    Algo::Opzosa => run_opzosa(
                        &mut spec,
                        self.iterations,
                        &mut sphere,
                        &SlidingOptions {
                            anchor: self.anchor,
                            inner_cap: self.inner_cap,
                            x0: None,
                        },
                        probe_ref,
                    ),
                    _ => run_md(&mut spec, &self.md_config(), &mut sphere, None, probe_ref),
                }
            }
            ProblemKind::Geomedian => {
                let bench = ExperimentConfig {
                    n: self.n,
                    m: self.m,
                    lambda: self.lambda,
                    sigma: self.sigma,
                    r: self.r,
                    networks: vec![self.network],
                    n_outer: self.iterations,
                    md_steps: Some(self.iterations),
                    seeds: vec![self.seed],
                    algorithms: vec![self.algo],
                    data_seed: self.data_seed,
                    inner_cap: self.inner_cap,
                    penalty_factor: self.penalty_factor.unwrap_or(PenaltyFactor::ExperimentHalf),
                    anchor: self.anchor,
                    ..ExperimentConfig::desk()
                };
                let data = std::sync::Arc::new(geomedian::generate_data(self.m, self.n, self.data_seed));
                let problem = BenchProblem::build(&bench, self.network, data)?;
                if let Some(g) = self.g_bound {
                    let mut spec = problem.spec(&bench, self.seed)?;
                    spec.g_bound = g;
                    let probe = |x: &[f64]| problem.gap(x);
                    let x0 = vec![0.0; problem.dim()];
                    return match self.algo {
                        Algo::Opzosa => run_opzosa(
                            &mut spec,
                            self.iterations,
                            &mut sphere,
                            &SlidingOptions {
                                anchor: self.anchor,
                                inner_cap: self.inner_cap,
                                x0: Some(x0),
                            },
                            Some(&probe),
                        ),
                        _ => run_md(&mut spec, &self.md_config(), &mut sphere, Some(&x0), Some(&probe)),
                    };
                }
                geomedian::run_cell(&bench, &problem, self.algo, self.seed, self.step)
            }
        }
    }
}

/// Builds a sweep configuration from `bench.*` keys.
pub fn experiment_from_raw(raw: &RawConfig) -> Result<ExperimentConfig> {
    if let Some(k) = raw
        .entries
        .keys()
        .find(|k| k.starts_with("problem.") || k.starts_with("solver."))
    {
        return Err(Error::config(k.as_str(), "single-run keys are not used by sweeps"));
    }
    let mut cfg = match raw.get_str("bench.scale") {
        None | Some("desk") => ExperimentConfig::desk(),
        Some("full") => ExperimentConfig::full_scale(),
        Some(other) => {
            return Err(Error::config(
                "bench.scale",
                format!("expected desk or full, got {other:?}"),
            ))
        }
    };
    cfg.n = at_least("bench.n", raw.get_or("bench.n", cfg.n)?, 1)?;
    cfg.m = at_least("bench.M", raw.get_or("bench.M", cfg.m)?, 2)?;
    cfg.lambda = positive("bench.lambda", raw.get_or("bench.lambda", cfg.lambda)?)?;
    cfg.sigma = nonnegative("bench.sigma", raw.get_or("bench.sigma", cfg.sigma)?)?;
    cfg.r = positive("bench.r", raw.get_or("bench.r", cfg.r)?)?;
    if let Some(nets) = raw.get_list::<Network>("bench.topologies")? {
        if nets.is_empty() {
            return Err(Error::config("bench.topologies", "list is empty"));
        }
        cfg.networks = nets;
    }
    if let Some(algos) = raw.get_list::<Algo>("bench.algorithms")? {
        if algos.is_empty() {
            return Err(Error::config("bench.algorithms", "list is empty"));
        }
        cfg.algorithms = algos;
    }
    cfg.n_outer = at_least("bench.N_outer", raw.get_or("bench.N_outer", cfg.n_outer)?, 1)?;
    if let Some(s) = raw.get::<usize>("bench.md_steps")? {
        cfg.md_steps = Some(at_least("bench.md_steps", s, 1)?);
    }
    let count = at_least("bench.seeds", raw.get_or("bench.seeds", cfg.seeds.len())?, 1)?;
    let first: u64 = raw.get_or("bench.seed", 0)?;
    cfg.seeds = (first..first + count as u64).collect();
    cfg.data_seed = raw.get_or("bench.data_seed", cfg.data_seed)?;
    if let Some(grid) = raw.get_list::<f64>("bench.step_grid")? {
        if grid.is_empty() {
            return Err(Error::config("bench.step_grid", "list is empty"));
        }
        for s in &grid {
            positive("bench.step_grid", *s)?;
        }
        cfg.step_grid = grid;
    }
    cfg.tune_seeds = at_least("bench.tune_seeds", raw.get_or("bench.tune_seeds", cfg.tune_seeds)?, 1)?;
    cfg.inner_cap = raw.get_or("bench.inner_cap", cfg.inner_cap)?;
    if cfg.inner_cap == 0 {
        return Err(Error::config("bench.inner_cap", "must be at least 1"));
    }
    cfg.penalty_factor = raw.get_or("bench.penalty_factor", cfg.penalty_factor)?;
    if let Some(s) = raw.get_str("bench.anchor") {
        cfg.anchor = parse_anchor("bench.anchor", s)?;
    }
    cfg.reference_tol = positive(
        "bench.reference_tol",
        raw.get_or("bench.reference_tol", cfg.reference_tol)?,
    )?;
    cfg.validate()?;
    Ok(cfg)
}
