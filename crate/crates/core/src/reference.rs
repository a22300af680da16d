//! High-accuracy solver for `min_x g(x) + Σ_b ‖x_b − c_b‖₂`, where `g` is
//! smooth and the second term is a sum of Euclidean distances over blocks.
//!
//! Accelerated proximal gradient with gradient-based adaptive restart; the
//! prox of the block-distance term is a block soft threshold. The
//! minimizer of every problem handled here lies in the convex hull of the
//! anchors `c_b`, so no constraint is needed.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist2, norm2};
use crate::sampling::SmoothObjective;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceOptions {
    /// Stop once the gradient mapping `L‖x⁺ − y‖` drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions {
            tol: 1e-9,
            max_iters: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    /// Best iterate seen.
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// `Σ_b ‖x_b − c_b‖₂` over consecutive blocks of length `block`.
pub fn block_distance(x: &[f64], anchors: &[f64], block: usize) -> f64 {
    x.chunks_exact(block)
        .zip(anchors.chunks_exact(block))
        .map(|(a, b)| dist2(a, b))
        .sum()
}

fn block_soft_threshold(v: &[f64], anchors: &[f64], block: usize, t: f64, out: &mut [f64]) {
    for ((o, vb), cb) in out
        .chunks_exact_mut(block)
        .zip(v.chunks_exact(block))
        .zip(anchors.chunks_exact(block))
    {
        let d = dist2(vb, cb);
        let shrink = if d > t { 1.0 - t / d } else { 0.0 };
        for i in 0..block {
            o[i] = cb[i] + shrink * (vb[i] - cb[i]);
        }
    }
}

pub fn solve_block_distance<S: SmoothObjective>(
    smooth: &S,
    anchors: &[f64],
    block: usize,
    x0: &[f64],
    opts: ReferenceOptions,
) -> Result<ReferenceSolution> {
    let dim = smooth.dim();
    check_dim(dim, anchors.len())?;
    check_dim(dim, x0.len())?;
    if block == 0 || !dim.is_multiple_of(block) {
        return Err(Error::param(
            "block",
            format!("{block} does not divide dimension {dim}"),
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let l = smooth.smoothness();
    let l = if l > 0.0 { l } else { 1.0 };
    let step = 1.0 / l;
    let objective = |x: &[f64]| smooth.value(x) + block_distance(x, anchors, block);

    let mut x = x0.to_vec();
    let mut y = x.clone();
    let mut x_next = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut t = 1.0f64;
    let mut best = x.clone();
    let mut best_value = objective(&x);
    let mut residual = f64::INFINITY;

    for iter in 1..=opts.max_iters {
        smooth.gradient(&y, &mut grad);
        for i in 0..dim {
            v[i] = y[i] - step * grad[i];
        }
        block_soft_threshold(&v, anchors, block, step, &mut x_next);
        let mut diff_sq = 0.0;
        let mut restart_test = 0.0;
        for i in 0..dim {
            let d = x_next[i] - y[i];
            diff_sq += d * d;
            restart_test += (y[i] - x_next[i]) * (x_next[i] - x[i]);
        }
        residual = l * diff_sq.sqrt();
        let value = objective(&x_next);
        if value < best_value {
            best_value = value;
            best.copy_from_slice(&x_next);
        }
        if residual <= opts.tol {
            return Ok(ReferenceSolution {
                point: best,
                value: best_value,
                iterations: iter,
                residual,
            });
        }
        if restart_test > 0.0 {
            t = 1.0;
            y.copy_from_slice(&x_next);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let w = (t - 1.0) / t_next;
            for i in 0..dim {
                y[i] = x_next[i] + w * (x_next[i] - x[i]);
            }
            t = t_next;
        }
        std::mem::swap(&mut x, &mut x_next);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        residual,
    })
}

/// Minimizer of `(L/2)‖x − a‖² + ‖x − c‖₂` over `ℝⁿ`.
pub fn quadratic_plus_distance(l: f64, a: &[f64], c: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = a.iter().zip(c).map(|(a, c)| a - c).collect();
    let nd = norm2(&d);
    let shrink = if l * nd > 1.0 { 1.0 - 1.0 / (l * nd) } else { 0.0 };
    c.iter().zip(&d).map(|(c, d)| c + shrink * d).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_gossip, Penalty, PenaltyFactor, PenaltyObjective, Topology};
    use crate::sampling::IsotropicQuadratic;
    use std::sync::Arc;

    #[test]
    fn matches_closed_form_on_quadratic() {
        for (l, a, c) in [
            (2.0, vec![0.5, 0.0], vec![-0.3, 0.4]),
            (0.5, vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]),
            (10.0, vec![0.2, -0.1], vec![-1.0, 2.0]),
        ] {
            let q = IsotropicQuadratic {
                curvature: l,
                center: a.clone(),
            };
            let sol = solve_block_distance(
                &q,
                &c,
                c.len(),
                &vec![0.0; c.len()],
                ReferenceOptions {
                    tol: 1e-12,
                    max_iters: 100_000,
                },
            )
            .unwrap();
            let exact = quadratic_plus_distance(l, &a, &c);
            assert!(dist2(&sol.point, &exact) < 1e-10, "{:?} vs {:?}", sol.point, exact);
        }
    }

    #[test]
    fn zero_penalty_gives_anchors() {
        let anchors = vec![1.0, 2.0, -3.0, 0.5, 4.0, 4.0];
        let obj = PenaltyObjective::new(Penalty::Centralized { lambda: 0.0 }, 3, 2).unwrap();
        let sol = solve_block_distance(&obj, &anchors, 2, &[0.0; 6], ReferenceOptions::default()).unwrap();
        assert!(dist2(&sol.point, &anchors) < 1e-12);
        assert!(sol.value.abs() < 1e-12);
    }

    #[test]
    fn strong_consensus_on_identical_data() {
        let anchors = [0.7, -1.3].repeat(5);
        let obj = PenaltyObjective::new(
            Penalty::Decentralized {
                lambda: 1e3,
                gossip: Arc::new(build_gossip(Topology::Cycle, 5).unwrap()),
                factor: PenaltyFactor::ExperimentHalf,
            },
            5,
            2,
        )
        .unwrap();
        let sol = solve_block_distance(&obj, &anchors, 2, &[0.0; 10], ReferenceOptions::default()).unwrap();
        assert!(dist2(&sol.point, &anchors) < 1e-8);
        assert!(sol.value < 1e-8);
    }

    #[test]
    fn tighter_tolerance_never_increases_value() {
        let anchors: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.9).collect();
        let obj = PenaltyObjective::new(
            Penalty::Decentralized {
                lambda: 3.0,
                gossip: Arc::new(build_gossip(Topology::Star, 4).unwrap()),
                factor: PenaltyFactor::ExperimentHalf,
            },
            4,
            3,
        )
        .unwrap();
        let solve = |tol| {
            solve_block_distance(
                &obj,
                &anchors,
                3,
                &[0.0; 12],
                ReferenceOptions {
                    tol,
                    max_iters: 1_000_000,
                },
            )
            .unwrap()
            .value
        };
        let loose = solve(1e-4);
        let tight = solve(1e-6);
        assert!(tight <= loose);
        assert!(loose - tight < 1e-4);
    }

    #[test]
    fn rejects_bad_blocks() {
        let q = IsotropicQuadratic {
            curvature: 1.0,
            center: vec![0.0; 3],
        };
        assert!(solve_block_distance(&q, &[0.0; 3], 2, &[0.0; 3], ReferenceOptions::default()).is_err());
    }
}
