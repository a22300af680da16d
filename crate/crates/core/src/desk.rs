//! Small composite test problem with a known solution:
//! `g(x) = (L/2)‖x − a‖₂²` and `f(x) = ‖x − c‖₂` (so `G = 1`).
//!
//! In the Euclidean geometry `X` is the ball of radius `R` around the origin
//! with `a = R·(0.5, 0, …)` and `c = R·(−0.3, 0.4, 0, …)`; the minimizer lies on
//! the segment `[c, a]` and has a closed form. In the entropy geometry `X` is
//! the simplex and `a`, `c` are two interior points of it.

use crate::error::{Error, Result};
use crate::geometry::{FeasibleSet, NormKind, ProxSetup};
use crate::linalg::dist2;
use crate::reference::quadratic_plus_distance;
use crate::sampling::{IsotropicQuadratic, SmoothObjective, StochasticValueOracle};
use crate::sliding::ProblemSpec;

pub type DeskObjective = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type DeskSpec = ProblemSpec<IsotropicQuadratic, StochasticValueOracle<DeskObjective>>;

#[derive(Clone, Debug, PartialEq)]
pub struct DeskProblem {
    pub geometry: NormKind,
    pub smoothness: f64,
    pub radius: f64,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl DeskProblem {
    pub fn new(geometry: NormKind, n: usize, smoothness: f64, radius: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", "need dimension at least 2"));
        }
        if !(smoothness > 0.0) {
            return Err(Error::param("smoothness", "must be positive"));
        }
        if !(radius > 0.0) {
            return Err(Error::param("radius", "must be positive"));
        }
        let (a, c) = match geometry {
            NormKind::Euclidean => {
                let mut a = vec![0.0; n];
                let mut c = vec![0.0; n];
                a[0] = 0.5 * radius;
                c[0] = -0.3 * radius;
                c[1] = 0.4 * radius;
                (a, c)
            }
            NormKind::L1Entropy => {
                let rest = 0.3 / (n - 1) as f64;
                let mut a = vec![rest; n];
                a[0] = 0.7;
                let mut c = vec![1.0 / n as f64; n];
                c[0] *= 0.5;
                c[n - 1] += 0.5 / n as f64;
                (a, c)
            }
        };
        Ok(DeskProblem {
            geometry,
            smoothness,
            radius,
            a,
            c,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn setup(&self) -> ProxSetup {
        match self.geometry {
            NormKind::Euclidean => ProxSetup::euclidean(self.dim()),
            NormKind::L1Entropy => ProxSetup::entropy(self.dim()),
        }
    }

    pub fn set(&self) -> FeasibleSet {
        match self.geometry {
            NormKind::Euclidean => FeasibleSet::Ball {
                center: vec![0.0; self.dim()],
                radius: self.radius,
            },
            NormKind::L1Entropy => FeasibleSet::Simplex { dim: self.dim() },
        }
    }

    pub fn smooth(&self) -> IsotropicQuadratic {
        IsotropicQuadratic {
            curvature: self.smoothness,
            center: self.a.clone(),
        }
    }

    pub fn psi0(&self, x: &[f64]) -> f64 {
        self.smooth().value(x) + dist2(x, &self.c)
    }

    /// Minimizer and optimal value; only known in the Euclidean geometry.
    pub fn optimum(&self) -> Option<(Vec<f64>, f64)> {
        match self.geometry {
            NormKind::Euclidean => {
                let x = quadratic_plus_distance(self.smoothness, &self.a, &self.c);
                let v = self.psi0(&x);
                Some((x, v))
            }
            NormKind::L1Entropy => None,
        }
    }

    pub fn spec(&self, sigma: f64, r: f64, seed: u64) -> Result<DeskSpec> {
        let c = self.c.clone();
        let c_sub = self.c.clone();
        let objective: DeskObjective = Box::new(move |x: &[f64]| dist2(x, &c));
        let oracle = StochasticValueOracle::new(objective, self.dim(), sigma, seed)?.with_subgradient(
            move |x: &[f64], out: &mut [f64]| {
                let d = dist2(x, &c_sub);
                for i in 0..out.len() {
                    out[i] = if d > 0.0 { (x[i] - c_sub[i]) / d } else { 0.0 };
                }
            },
        );
        ProblemSpec::new(self.smooth(), oracle, self.setup(), self.set(), 1.0, sigma, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{solve_block_distance, ReferenceOptions};

    #[test]
    fn optimum_is_feasible_and_matches_iterative_solve() {
        for (n, l, radius) in [(2, 2.0, 1.0), (5, 0.7, 3.0), (2, 50.0, 1.0)] {
            let p = DeskProblem::new(NormKind::Euclidean, n, l, radius).unwrap();
            let (x, v) = p.optimum().unwrap();
            assert!(p.set().contains(&x, 0.0));
            let sol = solve_block_distance(
                &p.smooth(),
                &p.c,
                n,
                &vec![0.0; n],
                ReferenceOptions {
                    tol: 1e-12,
                    max_iters: 100_000,
                },
            )
            .unwrap();
            assert!((sol.value - v).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_variant_uses_interior_points() {
        let p = DeskProblem::new(NormKind::L1Entropy, 4, 1.0, 1.0).unwrap();
        for v in [&p.a, &p.c] {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(v.iter().all(|x| *x > 0.0));
        }
        assert!(p.optimum().is_none());
        p.spec(0.0, 1e-3, 0).unwrap();
    }
}
