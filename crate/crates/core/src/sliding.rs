//! Zeroth-order gradient sliding with one-point feedback.
//!
//! The outer loop queries `∇g` once per iteration at the extrapolated point
//! `x̲_k = (1 − γ_k) x̄_{k−1} + γ_k x_{k−1}` and hands the linearization to the
//! prox-sliding (PS) procedure, which runs `T_k` inner steps using only
//! one-point estimates of `∇f`:
//!
//! ```text
//! u_t = argmin_u ⟨∇g(x̲_k) + f̃'_r(u_{t−1}), u⟩ + β V(x, u) + β p_t V(u_{t−1}, u)
//! ũ_t = (1 − θ_t) ũ_{t−1} + θ_t u_t
//! ```
//!
//! The result of a run is the averaged point `x̄_N`. Exactly `N` gradient
//! queries and `2 Σ_k T_k` value queries are made.

use std::time::Instant;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{prox_unchecked, FeasibleSet, ProxSetup};
use crate::linalg::{lerp_assign, lerp_into};
use crate::rng::Rng;
use crate::sampling::{Estimator, EstimatorConfig, SmoothGradOracle, SmoothObjective, ValueOracle};
use crate::schedule::{self, build_schedule, ScheduleInputs, SlidingSchedule, DEFAULT_INNER_CAP};

/// Tolerance for feasibility checks of iterates.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Composite problem `min_{x ∈ X} f(x) + g(x)` with its oracles and the
/// constants the theory needs.
pub struct ProblemSpec<S, F> {
    pub smooth: SmoothGradOracle<S>,
    pub value: F,
    pub setup: ProxSetup,
    pub set: FeasibleSet,
    /// Bound `G` on `‖∇f‖₂`; only used to build schedules.
    pub g_bound: f64,
    pub sigma: f64,
    /// Smoothing radius of the estimator.
    pub r: f64,
}

impl<S: SmoothObjective, F: ValueOracle> ProblemSpec<S, F> {
    pub fn new(
        smooth: S,
        value: F,
        setup: ProxSetup,
        set: FeasibleSet,
        g_bound: f64,
        sigma: f64,
        r: f64,
    ) -> Result<Self> {
        set.validate(&setup)?;
        check_dim(setup.dim, smooth.dim())?;
        check_dim(setup.dim, value.dim())?;
        if !(smooth.smoothness() > 0.0) {
            return Err(Error::param("L", "smoothness of g must be positive"));
        }
        if !(g_bound > 0.0) {
            return Err(Error::param("G", "gradient bound must be positive"));
        }
        if !(r > 0.0) {
            return Err(Error::param("r", "smoothing radius must be positive"));
        }
        if !(sigma >= 0.0) {
            return Err(Error::param("sigma", "must be nonnegative"));
        }
        if !(set.bregman_diameter() > 0.0) {
            return Err(Error::param("set", "Bregman diameter must be positive"));
        }
        Ok(ProblemSpec {
            smooth: SmoothGradOracle::new(smooth),
            value,
            setup,
            set,
            g_bound,
            sigma,
            r,
        })
    }

    pub fn dim(&self) -> usize {
        self.setup.dim
    }

    pub fn schedule_inputs(&self) -> Result<ScheduleInputs> {
        Ok(ScheduleInputs {
            smoothness: self.smooth.smoothness(),
            diameter: self.set.bregman_diameter(),
            g_bound: self.g_bound,
            sigma: self.sigma,
            r: self.r,
            dim: self.setup.dim,
            p_squared: self.setup.p_squared()?,
        })
    }

    /// Noiseless `Ψ₀(x) = f(x) + g(x)` when the value oracle exposes `f`.
    pub fn psi0_exact(&self, x: &[f64]) -> Option<f64> {
        self.value.value_exact(x).map(|f| f + self.smooth.value(x))
    }
}

/// One row of a run trace, recorded after each outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub k: usize,
    /// Cumulative `∇g` queries (communication rounds in distributed problems).
    pub grad_g_calls: u64,
    /// Cumulative value-oracle queries.
    pub f_calls: u64,
    pub psi0_gap: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub final_point: Vec<f64>,
    /// Gap at the starting point, when a gap probe was supplied.
    pub initial_gap: Option<f64>,
    /// Some `T_k` hit the inner-iteration cap.
    pub capped: bool,
}

impl RunTrace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// First `∇g` count at which the gap falls to `fraction` of the initial gap.
    pub fn comm_to_fraction(&self, fraction: f64) -> Option<u64> {
        let target = fraction * self.initial_gap?;
        self.records
            .iter()
            .find(|r| r.psi0_gap.is_some_and(|g| g <= target))
            .map(|r| r.grad_g_calls)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.psi0_gap)
    }
}

/// Point at which `∇g` is queried in the outer loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradientAnchor {
    /// `x̲_k = (1 − γ_k) x̄_{k−1} + γ_k x_{k−1}`.
    #[default]
    Extrapolated,
    /// The prox center `x_{k−1}` of the current PS call.
    Literal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlidingOptions {
    pub anchor: GradientAnchor,
    pub inner_cap: u64,
    /// Starting point; defaults to the center of the feasible set.
    pub x0: Option<Vec<f64>>,
}

impl Default for SlidingOptions {
    fn default() -> Self {
        SlidingOptions {
            anchor: GradientAnchor::Extrapolated,
            inner_cap: DEFAULT_INNER_CAP,
            x0: None,
        }
    }
}

/// Linearization `h(y) = value + ⟨grad, y − at⟩` of `g`. Only `grad` enters
/// the prox step; the constant part does not move the argmin.
#[derive(Clone, Copy, Debug)]
pub struct Linearization<'a> {
    pub value: f64,
    pub grad: &'a [f64],
    pub at: &'a [f64],
}

/// Buffers reused across PS calls.
#[derive(Clone, Debug)]
pub struct PsWorkspace {
    estimator: Estimator,
    grad_f: Vec<f64>,
    linear: Vec<f64>,
    u_prev: Vec<f64>,
    u: Vec<f64>,
    u_tilde: Vec<f64>,
}

impl PsWorkspace {
    pub fn new(cfg: EstimatorConfig) -> Self {
        let n = cfg.n;
        PsWorkspace {
            estimator: Estimator::new(cfg),
            grad_f: vec![0.0; n],
            linear: vec![0.0; n],
            u_prev: vec![0.0; n],
            u: vec![0.0; n],
            u_tilde: vec![0.0; n],
        }
    }

    /// `u_T` of the last PS call.
    pub fn x_plus(&self) -> &[f64] {
        &self.u_prev
    }

    /// `ũ_T` of the last PS call.
    pub fn x_tilde_plus(&self) -> &[f64] {
        &self.u_tilde
    }
}

/// Runs the PS procedure and returns `(x⁺, x̃⁺) = (u_T, ũ_T)`.
#[allow(clippy::too_many_arguments)]
pub fn ps_procedure<S: SmoothObjective, F: ValueOracle>(
    spec: &mut ProblemSpec<S, F>,
    lin: &Linearization<'_>,
    x: &[f64],
    beta: f64,
    inner_iters: u64,
    sphere: &mut Rng,
    ws: &mut PsWorkspace,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = spec.dim();
    check_dim(n, x.len())?;
    check_dim(n, lin.grad.len())?;
    check_dim(n, ws.linear.len())?;
    if inner_iters == 0 {
        return Err(Error::param("T", "need at least one inner iteration"));
    }
    if !(beta > 0.0) {
        return Err(Error::param("beta", "must be positive"));
    }
    ps_run(spec, lin.grad, x, beta, inner_iters, sphere, ws)?;
    Ok((ws.u_prev.clone(), ws.u_tilde.clone()))
}

fn ps_run<S: SmoothObjective, F: ValueOracle>(
    spec: &mut ProblemSpec<S, F>,
    grad_g: &[f64],
    x: &[f64],
    beta: f64,
    inner_iters: u64,
    sphere: &mut Rng,
    ws: &mut PsWorkspace,
) -> Result<()> {
    ws.u_prev.copy_from_slice(x);
    ws.u_tilde.copy_from_slice(x);
    for t in 1..=inner_iters as usize {
        ws.estimator
            .one_point(&mut spec.value, &ws.u_prev, sphere, &mut ws.grad_f);
        for i in 0..ws.linear.len() {
            ws.linear[i] = grad_g[i] + ws.grad_f[i];
        }
        prox_unchecked(
            &spec.setup,
            &spec.set,
            &ws.linear,
            beta,
            schedule::prox_weight(t),
            x,
            &ws.u_prev,
            &mut ws.u,
        )?;
        lerp_assign(&mut ws.u_tilde, &ws.u, schedule::theta(t));
        std::mem::swap(&mut ws.u_prev, &mut ws.u);
        debug_assert!(spec.set.contains(&ws.u_prev, FEASIBILITY_TOL));
    }
    Ok(())
}

/// Gap probe: maps a point to `Ψ₀(x) − Ψ₀*`. Evaluated outside all counters.
pub type GapProbe<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);

/// Runs `n_outer` outer iterations with the theoretical schedule.
pub fn run_opzosa<S: SmoothObjective, F: ValueOracle>(
    spec: &mut ProblemSpec<S, F>,
    n_outer: usize,
    sphere: &mut Rng,
    options: &SlidingOptions,
    gap_probe: Option<GapProbe<'_>>,
) -> Result<RunTrace> {
    let schedule = build_schedule(&spec.schedule_inputs()?, n_outer, options.inner_cap)?;
    run_with_schedule(spec, &schedule, sphere, options, gap_probe)
}

/// Same as [`run_opzosa`] with a caller-provided schedule.
pub fn run_with_schedule<S: SmoothObjective, F: ValueOracle>(
    spec: &mut ProblemSpec<S, F>,
    schedule: &SlidingSchedule,
    sphere: &mut Rng,
    options: &SlidingOptions,
    gap_probe: Option<GapProbe<'_>>,
) -> Result<RunTrace> {
    let n = spec.dim();
    let x0 = match &options.x0 {
        Some(x0) => {
            check_dim(n, x0.len())?;
            x0.clone()
        }
        None => spec.set.center(),
    };
    if !spec.set.contains(&x0, FEASIBILITY_TOL) {
        return Err(Error::param("x0", "starting point is not feasible"));
    }
    let start = Instant::now();
    let grad_base = spec.smooth.calls();
    let f_base = spec.value.calls();
    let initial_gap = gap_probe.map(|p| p(&x0));

    let mut ws = PsWorkspace::new(EstimatorConfig::new(spec.r, n)?);
    let mut x = x0.clone();
    let mut x_bar = x0;
    let mut x_under = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut records = Vec::with_capacity(schedule.n_outer());

    for k in 1..=schedule.n_outer() {
        let gamma = schedule.gamma(k);
        lerp_into(&mut x_under, &x_bar, &x, gamma);
        match options.anchor {
            GradientAnchor::Extrapolated => spec.smooth.gradient(&x_under, &mut grad),
            GradientAnchor::Literal => spec.smooth.gradient(&x, &mut grad),
        }
        ps_run(
            spec,
            &grad,
            &x,
            schedule.beta(k),
            schedule.inner_iters(k),
            sphere,
            &mut ws,
        )?;
        lerp_assign(&mut x_bar, ws.x_tilde_plus(), gamma);
        x.copy_from_slice(ws.x_plus());
        debug_assert!(spec.set.contains(&x_bar, FEASIBILITY_TOL));

        records.push(TraceRecord {
            k,
            grad_g_calls: spec.smooth.calls() - grad_base,
            f_calls: spec.value.calls() - f_base,
            psi0_gap: gap_probe.map(|p| p(&x_bar)),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    if schedule.any_capped() {
        log::warn!("inner iteration count capped at {}", options.inner_cap);
    }
    Ok(RunTrace {
        records,
        final_point: x_bar,
        initial_gap,
        capped: schedule.any_capped(),
    })
}
