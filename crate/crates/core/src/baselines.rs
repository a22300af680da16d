//! Mirror-descent baselines that treat `f + g` as a whole:
//! `x_{k+1} = argmin_u ⟨d_k, u⟩ + (1/η_k) V(x_k, u)` with
//! `d_k = ∇f(x_k) + ∇g(x_k)` (first order) or `f̃'_r(x_k, ξ±) + ∇g(x_k)`
//! (zeroth order). Each step makes one `∇g` query.

use std::time::Instant;

use crate::error::{check_dim, Error, Result};
use crate::geometry::prox_unchecked;
use crate::par::{self, Exec};
use crate::rng::Rng;
use crate::sampling::{Estimator, EstimatorConfig, SmoothObjective, ValueOracle};
use crate::sliding::{GapProbe, ProblemSpec, RunTrace, TraceRecord, FEASIBILITY_TOL};

pub const DEFAULT_ZO_RADIUS: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// `η_k = η₀ / √k`
    InvSqrt(f64),
}

impl StepSize {
    pub fn at(&self, k: usize) -> f64 {
        match *self {
            StepSize::Constant(eta) => eta,
            StepSize::InvSqrt(eta) => eta / (k as f64).sqrt(),
        }
    }

    fn base(&self) -> f64 {
        match *self {
            StepSize::Constant(eta) | StepSize::InvSqrt(eta) => eta,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MdVariant {
    FirstOrder,
    ZerothOrder { r: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MdConfig {
    pub step: StepSize,
    pub steps: usize,
    pub variant: MdVariant,
}

impl MdConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step.base() > 0.0) {
            return Err(Error::param("step", "must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::param("steps", "need at least one step"));
        }
        if let MdVariant::ZerothOrder { r } = self.variant {
            if !(r > 0.0) {
                return Err(Error::param("r", "smoothing radius must be positive"));
            }
        }
        Ok(())
    }
}

pub fn run_md<S: SmoothObjective, F: ValueOracle>(
    spec: &mut ProblemSpec<S, F>,
    cfg: &MdConfig,
    sphere: &mut Rng,
    x0: Option<&[f64]>,
    gap_probe: Option<GapProbe<'_>>,
) -> Result<RunTrace> {
    cfg.validate()?;
    let n = spec.dim();
    let mut x = match x0 {
        Some(x0) => {
            check_dim(n, x0.len())?;
            x0.to_vec()
        }
        None => spec.set.center(),
    };
    if !spec.set.contains(&x, FEASIBILITY_TOL) {
        return Err(Error::param("x0", "starting point is not feasible"));
    }
    let mut estimator = match cfg.variant {
        MdVariant::ZerothOrder { r } => Some(Estimator::new(EstimatorConfig::new(r, n)?)),
        MdVariant::FirstOrder => None,
    };
    let start = Instant::now();
    let grad_base = spec.smooth.calls();
    let f_base = spec.value.calls();
    let initial_gap = gap_probe.map(|p| p(&x));

    let mut grad_g = vec![0.0; n];
    let mut grad_f = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut records = Vec::with_capacity(cfg.steps);
    for k in 1..=cfg.steps {
        match estimator.as_mut() {
            Some(est) => est.one_point(&mut spec.value, &x, sphere, &mut grad_f),
            None => spec.value.subgradient(&x, &mut grad_f)?,
        }
        spec.smooth.gradient(&x, &mut grad_g);
        for i in 0..n {
            grad_f[i] += grad_g[i];
        }
        prox_unchecked(
            &spec.setup,
            &spec.set,
            &grad_f,
            1.0 / cfg.step.at(k),
            0.0,
            &x,
            &x,
            &mut next,
        )?;
        std::mem::swap(&mut x, &mut next);
        records.push(TraceRecord {
            k,
            grad_g_calls: spec.smooth.calls() - grad_base,
            f_calls: spec.value.calls() - f_base,
            psi0_gap: gap_probe.map(|p| p(&x)),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(RunTrace {
        records,
        final_point: x,
        initial_gap,
        capped: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub step: f64,
    /// Mean final score per grid value, in ascending step order.
    pub scores: Vec<(f64, f64)>,
    /// The winner sits on the boundary of the grid.
    pub at_endpoint: bool,
}

/// Log-spaced 1-2-5 grid from `10^lo_exp` to `10^hi_exp` inclusive.
pub fn log_grid(lo_exp: i32, hi_exp: i32) -> Vec<f64> {
    let mut grid = Vec::new();
    for e in lo_exp..hi_exp {
        for m in [1.0, 2.0, 5.0] {
            grid.push(m * 10f64.powi(e));
        }
    }
    grid.push(10f64.powi(hi_exp));
    grid
}

/// Picks the grid value with the smallest mean final score over `seeds`.
/// `evaluate(step, seed)` runs one configuration and returns its final gap;
/// failed or non-finite runs score `+∞`. Ties go to the smaller step.
pub fn tune_step_size<E>(grid: &[f64], seeds: &[u64], exec: Exec, evaluate: E) -> Result<TuneOutcome>
where
    E: Fn(f64, u64) -> Result<f64> + Sync + Send,
{
    if grid.is_empty() {
        return Err(Error::param("grid", "step-size grid is empty"));
    }
    if seeds.is_empty() {
        return Err(Error::param("seeds", "need at least one tuning seed"));
    }
    let mut steps = grid.to_vec();
    steps.sort_by(|a, b| a.total_cmp(b));
    steps.dedup();
    let cells: Vec<(f64, u64)> = steps
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let results = par::map_slice(exec, &cells, |&(step, seed)| match evaluate(step, seed) {
        Ok(v) if v.is_finite() => v,
        _ => f64::INFINITY,
    });
    let scores: Vec<(f64, f64)> = steps
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let chunk = &results[i * seeds.len()..(i + 1) * seeds.len()];
            (s, chunk.iter().sum::<f64>() / seeds.len() as f64)
        })
        .collect();
    let mut best = 0;
    for (i, (_, score)) in scores.iter().enumerate() {
        if *score < scores[best].1 {
            best = i;
        }
    }
    let at_endpoint = steps.len() > 1 && (best == 0 || best == steps.len() - 1);
    if at_endpoint {
        log::warn!(
            "step-size tuning picked grid endpoint {}; consider widening the grid",
            steps[best]
        );
    }
    Ok(TuneOutcome {
        step: steps[best],
        scores,
        at_endpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{FeasibleSet, ProxSetup};
    use crate::linalg::dot;
    use crate::rng::{stream, Stream};
    use crate::sampling::{IsotropicQuadratic, StochasticValueOracle};

    struct Zero(usize);
    impl SmoothObjective for Zero {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn gradient(&self, _: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
        fn smoothness(&self) -> f64 {
            1.0
        }
    }

    fn linear_spec(c: [f64; 2], seed: u64) -> ProblemSpec<Zero, StochasticValueOracle<impl Fn(&[f64]) -> f64>> {
        ProblemSpec::new(
            Zero(2),
            StochasticValueOracle::new(move |x: &[f64]| dot(&c, x), 2, 0.0, seed)
                .unwrap()
                .with_subgradient(move |_, out| out.copy_from_slice(&c)),
            ProxSetup::euclidean(2),
            FeasibleSet::ball(vec![0.0; 2], 1e9).unwrap(),
            1.0,
            0.0,
            1e-2,
        )
        .unwrap()
    }

    #[test]
    fn first_order_step_is_gradient_step() {
        let mut spec = linear_spec([1.0, -2.0], 0);
        let cfg = MdConfig {
            step: StepSize::Constant(1.0),
            steps: 3,
            variant: MdVariant::FirstOrder,
        };
        let mut rng = stream(0, Stream::Sphere);
        let trace = run_md(&mut spec, &cfg, &mut rng, Some(&[0.0, 0.0]), None).unwrap();
        assert_eq!(trace.final_point, vec![-3.0, 6.0]);
        assert_eq!(spec.value.calls(), 0);
        assert_eq!(trace.last().unwrap().grad_g_calls, 3);
    }

    #[test]
    fn counters_for_both_variants() {
        for variant in [MdVariant::FirstOrder, MdVariant::ZerothOrder { r: 1e-2 }] {
            let mut spec = linear_spec([0.5, 0.5], 1);
            let cfg = MdConfig {
                step: StepSize::Constant(1e-3),
                steps: 50,
                variant,
            };
            let mut rng = stream(1, Stream::Sphere);
            let trace = run_md(&mut spec, &cfg, &mut rng, None, None).unwrap();
            let last = trace.last().unwrap();
            assert_eq!(last.grad_g_calls, 50);
            let expected_f = if variant == MdVariant::FirstOrder { 0 } else { 100 };
            assert_eq!(last.f_calls, expected_f);
        }
    }

    #[test]
    fn first_order_without_subgradient_is_rejected() {
        let mut spec = ProblemSpec::new(
            Zero(2),
            StochasticValueOracle::new(|x: &[f64]| x[0], 2, 0.0, 0).unwrap(),
            ProxSetup::euclidean(2),
            FeasibleSet::ball(vec![0.0; 2], 1.0).unwrap(),
            1.0,
            0.0,
            1e-2,
        )
        .unwrap();
        let cfg = MdConfig {
            step: StepSize::Constant(0.1),
            steps: 5,
            variant: MdVariant::FirstOrder,
        };
        let mut rng = stream(0, Stream::Sphere);
        assert!(matches!(
            run_md(&mut spec, &cfg, &mut rng, None, None),
            Err(Error::MissingSubgradient)
        ));
    }

    #[test]
    fn zeroth_order_direction_is_unbiased() {
        // One step from a fixed x with η = 1 moves by −d_k; average d_k.
        let c = [1.5, -0.5];
        let grad_g = [0.25, 0.25];
        let m = 10_000;
        let mut sum = [0.0; 2];
        let mut sum_sq = [0.0; 2];
        let x = [0.3, 0.1];
        for s in 0..m {
            let mut spec = ProblemSpec::new(
                IsotropicQuadratic {
                    curvature: 1.0,
                    center: vec![x[0] - grad_g[0], x[1] - grad_g[1]],
                },
                StochasticValueOracle::new(move |y: &[f64]| dot(&c, y), 2, 0.0, s).unwrap(),
                ProxSetup::euclidean(2),
                FeasibleSet::ball(vec![0.0; 2], 1e9).unwrap(),
                1.0,
                0.0,
                1e-2,
            )
            .unwrap();
            let cfg = MdConfig {
                step: StepSize::Constant(1.0),
                steps: 1,
                variant: MdVariant::ZerothOrder { r: 1e-2 },
            };
            let mut rng = stream(s, Stream::Sphere);
            let t = run_md(&mut spec, &cfg, &mut rng, Some(&x), None).unwrap();
            for i in 0..2 {
                let d = x[i] - t.final_point[i];
                sum[i] += d;
                sum_sq[i] += d * d;
            }
        }
        for i in 0..2 {
            let mean = sum[i] / m as f64;
            let se = ((sum_sq[i] / m as f64 - mean * mean) / m as f64).sqrt();
            assert!((mean - (c[i] + grad_g[i])).abs() <= 3.0 * se, "component {i}: {mean}");
        }
    }

    #[test]
    fn entropic_step_is_multiplicative_weights() {
        let c = [1.0, 0.0, -1.0];
        let mut spec = ProblemSpec::new(
            Zero(3),
            StochasticValueOracle::new(move |x: &[f64]| dot(&c, x), 3, 0.0, 0)
                .unwrap()
                .with_subgradient(move |_, out| out.copy_from_slice(&c)),
            ProxSetup::entropy(3),
            FeasibleSet::simplex(3).unwrap(),
            1.0,
            0.0,
            1e-2,
        )
        .unwrap();
        let cfg = MdConfig {
            step: StepSize::Constant(0.5),
            steps: 1,
            variant: MdVariant::FirstOrder,
        };
        let mut rng = stream(0, Stream::Sphere);
        let t = run_md(&mut spec, &cfg, &mut rng, None, None).unwrap();
        let w = [(-0.5f64).exp(), 1.0, 0.5f64.exp()];
        let z: f64 = w.iter().sum();
        for i in 0..3 {
            assert!((t.final_point[i] - w[i] / z).abs() < 1e-15);
        }
    }

    #[test]
    fn tuning_contracts() {
        let single = tune_step_size(&[0.1], &[0], Exec::Sequential, |_, _| Ok(5.0)).unwrap();
        assert_eq!(single.step, 0.1);
        assert!(!single.at_endpoint);

        let tie = tune_step_size(&[0.2, 0.1], &[0, 1], Exec::Parallel, |_, _| Ok(1.0)).unwrap();
        assert_eq!(tie.step, 0.1);

        let failing = tune_step_size(&[0.1, 1.0, 10.0], &[0], Exec::Sequential, |s, _| {
            if s > 0.5 {
                Err(Error::param("x", "boom"))
            } else {
                Ok(1.0)
            }
        })
        .unwrap();
        assert_eq!(failing.step, 0.1);
        assert!(failing.at_endpoint);
        assert!(tune_step_size(&[], &[0], Exec::Sequential, |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn tuning_on_quadratic_picks_interior_step() {
        // g(x) = ½‖x − a‖², f ≡ 0: any step in (0, 2) converges, η = 1 is exact.
        let grid = vec![1e-3, 1e-2, 1e-1, 1.0, 3.0, 10.0];
        let out = tune_step_size(&grid, &[0, 1], Exec::Parallel, |step, seed| {
            let mut spec = ProblemSpec::new(
                IsotropicQuadratic {
                    curvature: 1.0,
                    center: vec![0.5, -0.5],
                },
                StochasticValueOracle::new(|_: &[f64]| 0.0, 2, 0.0, seed)
                    .unwrap()
                    .with_subgradient(|_, out| out.fill(0.0)),
                ProxSetup::euclidean(2),
                FeasibleSet::ball(vec![0.0; 2], 10.0).unwrap(),
                1.0,
                0.0,
                1e-2,
            )?;
            let cfg = MdConfig {
                step: StepSize::Constant(step),
                steps: 20,
                variant: MdVariant::FirstOrder,
            };
            let mut rng = stream(seed, Stream::Sphere);
            let probe = |x: &[f64]| 0.5 * ((x[0] - 0.5).powi(2) + (x[1] + 0.5).powi(2));
            let t = run_md(&mut spec, &cfg, &mut rng, None, Some(&probe))?;
            Ok(t.final_gap().unwrap())
        })
        .unwrap();
        assert_eq!(out.step, 1.0);
        assert!(!out.at_endpoint);
    }

    #[test]
    fn grid_shape() {
        let g = log_grid(-4, 1);
        assert_eq!(g.len(), 16);
        assert_eq!(g[0], 1e-4);
        assert_eq!(*g.last().unwrap(), 10.0);
    }
}
