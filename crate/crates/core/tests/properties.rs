use std::sync::Arc;

use proptest::prelude::*;

use zo_sliding::baselines::{run_md, MdConfig, MdVariant, StepSize};
use zo_sliding::desk::DeskProblem;
use zo_sliding::geometry::{composite_prox, FeasibleSet, NormKind, ProxSetup};
use zo_sliding::network::{build_gossip, Penalty, PenaltyFactor, PenaltyObjective, Topology};
use zo_sliding::reference::{solve_block_distance, ReferenceOptions};
use zo_sliding::rng::{self, Stream};
use zo_sliding::sampling::{
    Estimator, EstimatorConfig, NoiseCoupling, SmoothObjective, StochasticValueOracle, ValueOracle,
};
use zo_sliding::sliding::{run_opzosa, SlidingOptions};

fn simplex_point(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ball_point(v: &[f64], radius: f64) -> Vec<f64> {
    let n = norm2(v);
    if n > radius {
        v.iter().map(|x| x * radius / n).collect()
    } else {
        v.to_vec()
    }
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn divergence_dominates_half_squared_norm(wx in weights(6), wy in weights(6), a in prop::collection::vec(-3.0f64..3.0, 6), b in prop::collection::vec(-3.0f64..3.0, 6)) {
        let e = ProxSetup::euclidean(6);
        let d = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        prop_assert!(e.bregman(&a, &b).unwrap() >= 0.5 * d * (1.0 - 1e-12));
        let s = ProxSetup::entropy(6);
        let (x, y) = (simplex_point(&wx), simplex_point(&wy));
        let l1: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum();
        prop_assert!(s.bregman(&x, &y).unwrap() >= 0.5 * l1 * l1 * (1.0 - 1e-12));
    }

    #[test]
    fn prox_is_its_own_anchor_without_linear_term(w in weights(5), v in prop::collection::vec(-2.0f64..2.0, 5), beta in 0.1f64..10.0) {
        let x = simplex_point(&w);
        let mut out = vec![0.0; 5];
        composite_prox(&ProxSetup::entropy(5), &FeasibleSet::simplex(5).unwrap(), &[0.0; 5], beta, 0.0, &x, &x, &mut out).unwrap();
        prop_assert_eq!(&out, &x);
        let y = ball_point(&v, 1.5);
        composite_prox(&ProxSetup::euclidean(5), &FeasibleSet::ball(vec![0.0; 5], 1.5).unwrap(), &[0.0; 5], beta, 0.0, &y, &y, &mut out).unwrap();
        prop_assert_eq!(&out, &y);
    }

    #[test]
    fn euclidean_prox_first_order_optimality(
        a in prop::collection::vec(-5.0f64..5.0, 4),
        x in prop::collection::vec(-1.0f64..1.0, 4),
        z in prop::collection::vec(-1.0f64..1.0, 4),
        vs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 20),
        beta in 0.1f64..5.0,
        p in 0.0f64..4.0,
    ) {
        let set = FeasibleSet::ball(vec![0.0; 4], 1.0).unwrap();
        let (x, z) = (ball_point(&x, 1.0), ball_point(&z, 1.0));
        let mut u = vec![0.0; 4];
        composite_prox(&ProxSetup::euclidean(4), &set, &a, beta, p, &x, &z, &mut u).unwrap();
        prop_assert!(set.contains(&u, 1e-12));
        for v in &vs {
            let v = ball_point(v, 1.0);
            let ip: f64 = (0..4).map(|i| (a[i] + beta * (u[i] - x[i]) + beta * p * (u[i] - z[i])) * (v[i] - u[i])).sum();
            prop_assert!(ip >= -1e-8, "{ip}");
        }
    }

    #[test]
    fn estimator_calls_and_noise_cancellation(
        x in prop::collection::vec(-1.0f64..1.0, 5),
        c in prop::collection::vec(-1.0f64..1.0, 5),
        sigma in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let n = 5;
        let c2 = c.clone();
        let f = move |y: &[f64]| y.iter().zip(&c2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let mut noisy = StochasticValueOracle::new(f.clone(), n, sigma, seed).unwrap();
        let mut clean = StochasticValueOracle::new(f, n, 0.0, seed).unwrap();
        let mut sphere = rng::stream(seed, Stream::Sphere);
        let mut est = Estimator::new(EstimatorConfig::new(0.05, n).unwrap());
        let (mut a, mut b) = (vec![0.0; n], vec![0.0; n]);
        for k in 1..=5u64 {
            est.two_point(&mut noisy, &x, &mut sphere, &mut a);
            let e = est.last_direction().to_vec();
            est.along(&mut clean, &x, &e, NoiseCoupling::Independent, &mut b);
            prop_assert_eq!(noisy.calls(), 2 * k);
            prop_assert_eq!(clean.calls(), 2 * k);
            for i in 0..n {
                prop_assert!((a[i] - b[i]).abs() <= 1e-9 * (1.0 + b[i].abs()));
            }
        }
    }

    #[test]
    fn decentralized_gradient_is_lipschitz(
        xs in prop::collection::vec(-3.0f64..3.0, 12),
        ys in prop::collection::vec(-3.0f64..3.0, 12),
        m in 2usize..5,
        lambda in 0.1f64..50.0,
    ) {
        let n = 3;
        let (x, y) = (&xs[..m * n], &ys[..m * n]);
        for topology in Topology::ALL {
            let w = Arc::new(build_gossip(topology, m).unwrap());
            for factor in [PenaltyFactor::PaperEq3, PenaltyFactor::ExperimentHalf] {
                let g = PenaltyObjective::new(Penalty::Decentralized { lambda, gossip: w.clone(), factor }, m, n).unwrap();
                let (mut gx, mut gy) = (vec![0.0; m * n], vec![0.0; m * n]);
                g.gradient(x, &mut gx);
                g.gradient(y, &mut gy);
                let lhs = gx.iter().zip(&gy).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let rhs = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                prop_assert!(lhs <= g.smoothness() * rhs * (1.0 + 1e-10) + 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sliding_is_feasible_deterministic_and_counted(seed in any::<u64>(), n_outer in 1usize..5, entropy in any::<bool>(), sigma in 0.0f64..0.05) {
        let geometry = if entropy { NormKind::L1Entropy } else { NormKind::Euclidean };
        let desk = DeskProblem::new(geometry, 3, 1.5, 1.0).unwrap();
        let run = || {
            let mut spec = desk.spec(sigma, 0.05, seed).unwrap();
            let mut sphere = rng::stream(seed, Stream::Sphere);
            run_opzosa(&mut spec, n_outer, &mut sphere, &SlidingOptions::default(), None).unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(&a.final_point, &b.final_point);
        for (x, y) in a.records.iter().zip(&b.records) {
            prop_assert_eq!((x.k, x.grad_g_calls, x.f_calls, x.psi0_gap), (y.k, y.grad_g_calls, y.f_calls, y.psi0_gap));
        }
        prop_assert!(desk.set().contains(&a.final_point, 1e-10));
        let last = a.last().unwrap();
        prop_assert_eq!(last.grad_g_calls, n_outer as u64);
        prop_assert_eq!(last.f_calls % 2, 0);
    }

    #[test]
    fn mirror_descent_is_feasible_and_counted(seed in any::<u64>(), steps in 1usize..40, step in 0.001f64..1.0, entropy in any::<bool>(), zeroth in any::<bool>()) {
        let geometry = if entropy { NormKind::L1Entropy } else { NormKind::Euclidean };
        let desk = DeskProblem::new(geometry, 4, 1.0, 1.0).unwrap();
        let cfg = MdConfig {
            step: StepSize::Constant(step),
            steps,
            variant: if zeroth { MdVariant::ZerothOrder { r: 0.01 } } else { MdVariant::FirstOrder },
        };
        let mut spec = desk.spec(0.01, 0.01, seed).unwrap();
        let mut sphere = rng::stream(seed, Stream::Sphere);
        let trace = run_md(&mut spec, &cfg, &mut sphere, None, None).unwrap();
        prop_assert!(desk.set().contains(&trace.final_point, 1e-10));
        let last = trace.last().unwrap();
        prop_assert_eq!(last.grad_g_calls, steps as u64);
        prop_assert_eq!(last.f_calls, if zeroth { 2 * steps as u64 } else { 0 });
    }

    #[test]
    fn zero_weight_decouples_devices(anchors in prop::collection::vec(-2.0f64..2.0, 12), m in 2usize..5) {
        let n = 3;
        let anchors = &anchors[..m * n];
        let g = PenaltyObjective::new(Penalty::Centralized { lambda: 0.0 }, m, n).unwrap();
        let sol = solve_block_distance(&g, anchors, n, &vec![0.0; m * n], ReferenceOptions::default()).unwrap();
        prop_assert!(sol.value.abs() < 1e-6);
        for (u, v) in sol.point.iter().zip(anchors) {
            prop_assert!((u - v).abs() < 1e-6);
        }
    }
}
