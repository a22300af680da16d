//! Sphere sampling, noisy zeroth-order oracles and the finite-difference
//! gradient estimators built on them.
//!
//! Objectives handed to a value oracle must be defined on an `r`-enlargement of
//! the feasible set: the estimators probe `x ± r e`, which may leave it.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::geometry::ProxSetup;
use crate::par::{self, Exec};
use crate::rng::{self, Rng, Stream};

/// Uniform direction on the unit sphere in `ℝⁿ` (normalized Gaussian vector).
pub fn sample_sphere(n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::param("n", "sphere dimension must be at least 1"));
    }
    let mut e = vec![0.0; n];
    sample_sphere_into(&mut e, rng);
    Ok(e)
}

/// In-place variant of [`sample_sphere`]; `out` must be non-empty.
pub fn sample_sphere_into(out: &mut [f64], rng: &mut Rng) {
    loop {
        let mut sq = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            sq += *v * *v;
        }
        if sq > 0.0 {
            let norm = sq.sqrt();
            for v in out.iter_mut() {
                *v /= norm;
            }
            return;
        }
    }
}

/// How the two probes of a finite difference draw their noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseCoupling {
    /// Independent draws `ξ⁺`, `ξ⁻` (one-point feedback).
    Independent,
    /// One draw shared by both probes (two-point feedback).
    Shared,
}

/// Zeroth-order access to a function through noisy evaluations.
pub trait ValueOracle {
    fn dim(&self) -> usize;

    /// One evaluation with a fresh noise draw.
    fn query(&mut self, x: &[f64]) -> f64;

    /// Evaluations at `plus` and `minus`. Counts as two calls.
    fn query_pair(&mut self, plus: &[f64], minus: &[f64], coupling: NoiseCoupling) -> (f64, f64);

    /// Number of evaluations so far.
    fn calls(&self) -> u64;

    /// Noiseless value, when known. Never counted.
    fn value_exact(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// A (possibly noisy) subgradient, for first-order baselines.
    fn subgradient(&mut self, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::MissingSubgradient)
    }

    fn subgradient_calls(&self) -> u64 {
        0
    }
}

type SubgradientFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// `f̃(x, ξ) = f(x) + ξ` with `ξ ~ 𝒩(0, σ²)` drawn independently of `x`.
///
/// Probes on the "plus" side draw from one stream and probes on the "minus"
/// side from another, both derived from the oracle's seed.
pub struct StochasticValueOracle<F> {
    objective: F,
    dim: usize,
    sigma: f64,
    noise_plus: Rng,
    noise_minus: Rng,
    calls: u64,
    subgradient: Option<SubgradientFn>,
    subgradient_calls: u64,
}

impl<F: Fn(&[f64]) -> f64> StochasticValueOracle<F> {
    pub fn new(objective: F, dim: usize, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::param("sigma", "noise level must be nonnegative"));
        }
        Ok(StochasticValueOracle {
            objective,
            dim,
            sigma,
            noise_plus: rng::stream(seed, Stream::NoisePlus),
            noise_minus: rng::stream(seed, Stream::NoiseMinus),
            calls: 0,
            subgradient: None,
            subgradient_calls: 0,
        })
    }

    /// Attaches an exact subgradient of the noiseless objective.
    pub fn with_subgradient(mut self, sub: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.subgradient = Some(Box::new(sub));
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn noise(sigma: f64, rng: &mut Rng) -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            sigma * rng.sample::<f64, _>(StandardNormal)
        }
    }
}

impl<F: Fn(&[f64]) -> f64> ValueOracle for StochasticValueOracle<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn query(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        (self.objective)(x) + Self::noise(self.sigma, &mut self.noise_plus)
    }

    fn query_pair(&mut self, plus: &[f64], minus: &[f64], coupling: NoiseCoupling) -> (f64, f64) {
        self.calls += 2;
        let xi_plus = Self::noise(self.sigma, &mut self.noise_plus);
        let xi_minus = match coupling {
            NoiseCoupling::Independent => Self::noise(self.sigma, &mut self.noise_minus),
            NoiseCoupling::Shared => xi_plus,
        };
        ((self.objective)(plus) + xi_plus, (self.objective)(minus) + xi_minus)
    }

    fn calls(&self) -> u64 {
        self.calls
    }

    fn value_exact(&self, x: &[f64]) -> Option<f64> {
        Some((self.objective)(x))
    }

    fn subgradient(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.subgradient {
            Some(sub) => {
                self.subgradient_calls += 1;
                sub(x, out);
                Ok(())
            }
            None => Err(Error::MissingSubgradient),
        }
    }

    fn subgradient_calls(&self) -> u64 {
        self.subgradient_calls
    }
}

impl<O: ValueOracle + ?Sized> ValueOracle for &mut O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn query(&mut self, x: &[f64]) -> f64 {
        (**self).query(x)
    }
    fn query_pair(&mut self, plus: &[f64], minus: &[f64], coupling: NoiseCoupling) -> (f64, f64) {
        (**self).query_pair(plus, minus, coupling)
    }
    fn calls(&self) -> u64 {
        (**self).calls()
    }
    fn value_exact(&self, x: &[f64]) -> Option<f64> {
        (**self).value_exact(x)
    }
    fn subgradient(&mut self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).subgradient(x, out)
    }
    fn subgradient_calls(&self) -> u64 {
        (**self).subgradient_calls()
    }
}

/// A convex, `L`-smooth function with an exact gradient.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Lipschitz constant of the gradient in the chosen norm.
    fn smoothness(&self) -> f64;
}

/// First-order oracle for `g` that counts gradient queries.
#[derive(Clone, Debug)]
pub struct SmoothGradOracle<S> {
    inner: S,
    calls: u64,
}

impl<S: SmoothObjective> SmoothGradOracle<S> {
    pub fn new(inner: S) -> Self {
        SmoothGradOracle { inner, calls: 0 }
    }

    pub fn gradient(&mut self, x: &[f64], out: &mut [f64]) {
        self.calls += 1;
        self.inner.gradient(x, out);
    }

    /// Uncounted; used for diagnostics only.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }

    pub fn smoothness(&self) -> f64 {
        self.inner.smoothness()
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

/// `g(x) = (L/2)‖x − center‖₂²`.
#[derive(Clone, Debug)]
pub struct IsotropicQuadratic {
    pub curvature: f64,
    pub center: Vec<f64>,
}

impl SmoothObjective for IsotropicQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let d = crate::linalg::dist2(x, &self.center);
        0.5 * self.curvature * d * d
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.center) {
            *o = self.curvature * (xi - ci);
        }
    }

    fn smoothness(&self) -> f64 {
        self.curvature
    }
}

/// Smoothing radius `r` and ambient dimension `n` of the finite-difference
/// estimators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub r: f64,
    pub n: usize,
}

impl EstimatorConfig {
    pub fn new(r: f64, n: usize) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::param("r", format!("smoothing radius must be positive, got {r}")));
        }
        if n == 0 {
            return Err(Error::param("n", "dimension must be at least 1"));
        }
        Ok(EstimatorConfig { r, n })
    }
}

/// Reusable buffers for the estimators.
#[derive(Clone, Debug)]
pub struct Estimator {
    cfg: EstimatorConfig,
    e: Vec<f64>,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl Estimator {
    pub fn new(cfg: EstimatorConfig) -> Self {
        Estimator {
            cfg,
            e: vec![0.0; cfg.n],
            plus: vec![0.0; cfg.n],
            minus: vec![0.0; cfg.n],
        }
    }

    pub fn config(&self) -> EstimatorConfig {
        self.cfg
    }

    /// Direction used by the last estimate.
    pub fn last_direction(&self) -> &[f64] {
        &self.e
    }

    /// `(n / 2r) (f̃(x + re, ξ⁺) − f̃(x − re, ξ⁻)) e` with a fresh direction.
    pub fn one_point<O: ValueOracle + ?Sized>(&mut self, oracle: &mut O, x: &[f64], rng: &mut Rng, out: &mut [f64]) {
        sample_sphere_into(&mut self.e, rng);
        self.finite_difference(oracle, x, NoiseCoupling::Independent, out);
    }

    /// Same as [`Estimator::one_point`] with both probes sharing one noise draw.
    pub fn two_point<O: ValueOracle + ?Sized>(&mut self, oracle: &mut O, x: &[f64], rng: &mut Rng, out: &mut [f64]) {
        sample_sphere_into(&mut self.e, rng);
        self.finite_difference(oracle, x, NoiseCoupling::Shared, out);
    }

    /// Finite difference along a caller-supplied unit direction.
    pub fn along<O: ValueOracle + ?Sized>(
        &mut self,
        oracle: &mut O,
        x: &[f64],
        direction: &[f64],
        coupling: NoiseCoupling,
        out: &mut [f64],
    ) {
        self.e.copy_from_slice(direction);
        self.finite_difference(oracle, x, coupling, out);
    }

    fn finite_difference<O: ValueOracle + ?Sized>(
        &mut self,
        oracle: &mut O,
        x: &[f64],
        coupling: NoiseCoupling,
        out: &mut [f64],
    ) {
        let r = self.cfg.r;
        for i in 0..x.len() {
            self.plus[i] = x[i] + r * self.e[i];
            self.minus[i] = x[i] - r * self.e[i];
        }
        let (fp, fm) = oracle.query_pair(&self.plus, &self.minus, coupling);
        let scale = self.cfg.n as f64 / (2.0 * r) * (fp - fm);
        for (o, ei) in out.iter_mut().zip(&self.e) {
            *o = scale * ei;
        }
    }
}

pub fn one_point_estimate<O: ValueOracle + ?Sized>(
    oracle: &mut O,
    cfg: EstimatorConfig,
    x: &[f64],
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_dim(cfg.n, x.len())?;
    check_dim(cfg.n, oracle.dim())?;
    let mut out = vec![0.0; cfg.n];
    Estimator::new(cfg).one_point(oracle, x, rng, &mut out);
    Ok(out)
}

pub fn two_point_estimate<O: ValueOracle + ?Sized>(
    oracle: &mut O,
    cfg: EstimatorConfig,
    x: &[f64],
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_dim(cfg.n, x.len())?;
    check_dim(cfg.n, oracle.dim())?;
    let mut out = vec![0.0; cfg.n];
    Estimator::new(cfg).two_point(oracle, x, rng, &mut out);
    Ok(out)
}

/// Monte-Carlo estimate of the smoothed function `F(x) = 𝔼[f(x + re)]`.
/// Diagnostic only; none of the optimizers call it.
pub fn smoothed_value_mc<O: ValueOracle + ?Sized>(
    oracle: &mut O,
    cfg: EstimatorConfig,
    x: &[f64],
    samples: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    check_dim(cfg.n, x.len())?;
    let mut e = vec![0.0; cfg.n];
    let mut probe = vec![0.0; cfg.n];
    let mut acc = 0.0;
    for _ in 0..samples {
        sample_sphere_into(&mut e, rng);
        for i in 0..cfg.n {
            probe[i] = x[i] + cfg.r * e[i];
        }
        acc += oracle.query(&probe);
    }
    Ok(acc / samples as f64)
}

/// Sample statistics of repeated one-point estimates at a fixed point.
#[derive(Clone, Debug)]
pub struct EstimateStats {
    pub samples: usize,
    pub mean: Vec<f64>,
    /// Monte-Carlo standard error of each component of `mean`.
    pub std_err: Vec<f64>,
    /// Empirical `𝔼‖estimate‖²_*`.
    pub mean_sq_dual_norm: f64,
    pub oracle_calls: u64,
}

const MC_CHUNK: usize = 8192;

/// Runs `samples` independent one-point estimates at `x`, in fixed-size chunks.
/// Chunk `c` uses a fresh oracle from `make_oracle(seed_c)` and a sphere stream
/// derived from the same child seed, so the result does not depend on `exec`.
pub fn one_point_statistics<O, M>(
    make_oracle: M,
    setup: &ProxSetup,
    cfg: EstimatorConfig,
    x: &[f64],
    samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<EstimateStats>
where
    O: ValueOracle,
    M: Fn(u64) -> O + Sync + Send,
{
    if samples == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    check_dim(cfg.n, x.len())?;
    check_dim(cfg.n, setup.dim)?;
    let n = cfg.n;
    let chunks = par::chunks(samples, MC_CHUNK);
    let partials = par::map_indexed(exec, chunks.len(), |c| {
        let (start, end) = chunks[c];
        let child = rng::derive_seed(seed, c as u64);
        let mut oracle = make_oracle(child);
        let mut sphere = rng::stream(child, Stream::Sphere);
        let mut est = Estimator::new(cfg);
        let mut g = vec![0.0; n];
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        let mut dual_sq = 0.0;
        for _ in start..end {
            est.one_point(&mut oracle, x, &mut sphere, &mut g);
            for i in 0..n {
                sum[i] += g[i];
                sum_sq[i] += g[i] * g[i];
            }
            let d = setup.dual_norm_unchecked(&g);
            dual_sq += d * d;
        }
        (sum, sum_sq, dual_sq, oracle.calls())
    });
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut dual_sq = 0.0;
    let mut calls = 0;
    for (s, s2, d, c) in partials {
        for i in 0..n {
            sum[i] += s[i];
            sum_sq[i] += s2[i];
        }
        dual_sq += d;
        calls += c;
    }
    let m = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let std_err = (0..n)
        .map(|i| {
            let var = (sum_sq[i] / m - mean[i] * mean[i]).max(0.0) * m / (m - 1.0).max(1.0);
            (var / m).sqrt()
        })
        .collect();
    Ok(EstimateStats {
        samples,
        mean,
        std_err,
        mean_sq_dual_norm: dual_sq / m,
        oracle_calls: calls,
    })
}
