//! Proximal setups, feasible sets and the composite prox-mapping.
//!
//! Two setups are supported:
//!
//! * Euclidean: `‖·‖ = ‖·‖₂`, `ν(x) = ½‖x‖₂²`, `V(x, y) = ½‖y − x‖₂²`, paired
//!   with balls, products of balls and boxes.
//! * Entropy: `‖·‖ = ‖·‖₁`, `ν(x) = Σ xᵢ ln xᵢ`, `V(x, y) = KL(y ‖ x)` on the
//!   probability simplex.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist2, norm2, norm_inf};

/// Coordinates of simplex points never drop below this value.
pub const SIMPLEX_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    Euclidean,
    L1Entropy,
}

/// Exponent `q` of the dual norm `‖·‖_q`. Kept as a tag so that `2/q` is
/// defined by cases instead of through a float infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DualExponent {
    Finite(f64),
    Infinite,
}

impl DualExponent {
    pub fn two_over_q(self) -> f64 {
        match self {
            DualExponent::Finite(q) => 2.0 / q,
            DualExponent::Infinite => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxSetup {
    pub norm: NormKind,
    pub dim: usize,
}

impl ProxSetup {
    pub fn euclidean(dim: usize) -> Self {
        ProxSetup {
            norm: NormKind::Euclidean,
            dim,
        }
    }

    pub fn entropy(dim: usize) -> Self {
        ProxSetup {
            norm: NormKind::L1Entropy,
            dim,
        }
    }

    pub fn dual_exponent(&self) -> DualExponent {
        match self.norm {
            NormKind::Euclidean => DualExponent::Finite(2.0),
            NormKind::L1Entropy => DualExponent::Infinite,
        }
    }

    /// Primal norm `‖v‖`.
    pub fn norm(&self, v: &[f64]) -> f64 {
        match self.norm {
            NormKind::Euclidean => norm2(v),
            NormKind::L1Entropy => v.iter().map(|x| x.abs()).sum(),
        }
    }

    /// Dual norm `‖v‖_*`: `‖v‖₂` for `q = 2`, `‖v‖_∞` for `q = ∞`.
    pub fn dual_norm(&self, v: &[f64]) -> Result<f64> {
        check_dim(self.dim, v.len())?;
        Ok(self.dual_norm_unchecked(v))
    }

    #[inline]
    pub(crate) fn dual_norm_unchecked(&self, v: &[f64]) -> f64 {
        match self.norm {
            NormKind::Euclidean => norm2(v),
            NormKind::L1Entropy => norm_inf(v),
        }
    }

    /// Distance-generating function `ν`.
    pub fn distance_generator(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        match self.norm {
            NormKind::Euclidean => Ok(0.5 * x.iter().map(|v| v * v).sum::<f64>()),
            NormKind::L1Entropy => x
                .iter()
                .map(|&v| {
                    if v < 0.0 {
                        Err(Error::Domain(format!("negative entropy undefined at {v}")))
                    } else if v == 0.0 {
                        Ok(0.0)
                    } else {
                        Ok(v * v.ln())
                    }
                })
                .sum(),
        }
    }

    /// Bregman divergence `V(x, y) = ν(y) − ν(x) − ⟨∇ν(x), y − x⟩`.
    pub fn bregman(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, y.len())?;
        match self.norm {
            NormKind::Euclidean => {
                let d = dist2(x, y);
                Ok(0.5 * d * d)
            }
            NormKind::L1Entropy => {
                let mut acc = 0.0;
                for (&xi, &yi) in x.iter().zip(y) {
                    if xi <= 0.0 {
                        return Err(Error::Domain(format!(
                            "entropy divergence needs a strictly positive base point, got {xi}"
                        )));
                    }
                    if yi < 0.0 {
                        return Err(Error::Domain(format!("negative coordinate {yi}")));
                    }
                    if yi > 0.0 {
                        acc += yi * (yi / xi).ln();
                    }
                    acc += xi - yi;
                }
                Ok(acc.max(0.0))
            }
        }
    }

    /// `∇ν(x)`; the entropy version drops the constant `+1`, which cancels in
    /// every difference of gradients on the simplex.
    pub fn mirror_map(&self, x: &[f64], out: &mut [f64]) {
        match self.norm {
            NormKind::Euclidean => out.copy_from_slice(x),
            NormKind::L1Entropy => {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o = v.max(SIMPLEX_FLOOR).ln();
                }
            }
        }
    }

    /// `p²(n)` for this setup's dimension.
    pub fn p_squared(&self) -> Result<f64> {
        p_squared(self.dim, self.dual_exponent())
    }
}

/// `p²(n) = min{2q − 1, 32 ln n − 8} · n^{2/q − 1}` (natural logarithm).
pub fn p_squared(n: usize, q: DualExponent) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("n", format!("p²(n) needs n ≥ 2, got {n}")));
    }
    let nf = n as f64;
    let log_term = 32.0 * nf.ln() - 8.0;
    let factor = match q {
        DualExponent::Finite(q) => (2.0 * q - 1.0).min(log_term),
        DualExponent::Infinite => log_term,
    };
    Ok(factor * nf.powf(q.two_over_q() - 1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeasibleSet {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// `blocks` copies of the ball `B(center, radius)`, stacked row-major. Used
    /// for per-device variables in distributed problems.
    BallProduct {
        center: Vec<f64>,
        radius: f64,
        blocks: usize,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Simplex {
        dim: usize,
    },
}

impl FeasibleSet {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::param("radius", "must be positive"));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    pub fn ball_product(center: Vec<f64>, radius: f64, blocks: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::param("radius", "must be positive"));
        }
        if blocks == 0 {
            return Err(Error::param("blocks", "must be at least 1"));
        }
        Ok(FeasibleSet::BallProduct { center, radius, blocks })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(Error::param("box", "need lo < hi in every coordinate"));
        }
        Ok(FeasibleSet::Box { lo, hi })
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("dim", "simplex needs at least one coordinate"));
        }
        Ok(FeasibleSet::Simplex { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::BallProduct { center, blocks, .. } => center.len() * blocks,
            FeasibleSet::Box { lo, .. } => lo.len(),
            FeasibleSet::Simplex { dim } => *dim,
        }
    }

    pub fn supports(&self, setup: &ProxSetup) -> bool {
        matches!(
            (setup.norm, self),
            (NormKind::L1Entropy, FeasibleSet::Simplex { .. })
                | (
                    NormKind::Euclidean,
                    FeasibleSet::Ball { .. } | FeasibleSet::BallProduct { .. } | FeasibleSet::Box { .. }
                )
        )
    }

    pub fn validate(&self, setup: &ProxSetup) -> Result<()> {
        check_dim(setup.dim, self.dim())?;
        if !self.supports(setup) {
            return Err(Error::param(
                "set",
                format!("{:?} setup is not supported on {}", setup.norm, self.kind_name()),
            ));
        }
        Ok(())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FeasibleSet::Ball { .. } => "ball",
            FeasibleSet::BallProduct { .. } => "ball product",
            FeasibleSet::Box { .. } => "box",
            FeasibleSet::Simplex { .. } => "simplex",
        }
    }

    /// Bregman diameter `D = max √(2V(x, y))` for the setup this set pairs
    /// with. On the simplex the value `√(2 ln n)` bounds `√(2V(x₀, y))` from the
    /// uniform point `x₀`; KL is unbounded near the boundary.
    pub fn bregman_diameter(&self) -> f64 {
        match self {
            FeasibleSet::Ball { radius, .. } => 2.0 * radius,
            FeasibleSet::BallProduct { radius, blocks, .. } => 2.0 * radius * (*blocks as f64).sqrt(),
            FeasibleSet::Box { lo, hi } => dist2(lo, hi),
            FeasibleSet::Simplex { dim } => (2.0 * (*dim as f64).ln()).sqrt(),
        }
    }

    /// Analytic center: ball center, box midpoint or the uniform distribution.
    pub fn center(&self) -> Vec<f64> {
        match self {
            FeasibleSet::Ball { center, .. } => center.clone(),
            FeasibleSet::BallProduct { center, blocks, .. } => center.repeat(*blocks),
            FeasibleSet::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            FeasibleSet::Simplex { dim } => vec![1.0 / *dim as f64; *dim],
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            FeasibleSet::Ball { center, radius } => dist2(x, center) <= radius + tol,
            FeasibleSet::BallProduct { center, radius, .. } => {
                x.chunks(center.len()).all(|row| dist2(row, center) <= radius + tol)
            }
            FeasibleSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol),
            FeasibleSet::Simplex { .. } => x.iter().all(|v| *v >= -tol) && (x.iter().sum::<f64>() - 1.0).abs() <= tol,
        }
    }

    /// Euclidean projection in place. Not available on the simplex, which is
    /// only used with the entropy setup.
    pub fn project_euclidean(&self, x: &mut [f64]) -> Result<()> {
        match self {
            FeasibleSet::Ball { center, radius } => project_ball(x, center, *radius),
            FeasibleSet::BallProduct { center, radius, .. } => {
                for row in x.chunks_mut(center.len()) {
                    project_ball(row, center, *radius);
                }
            }
            FeasibleSet::Box { lo, hi } => {
                for (v, (l, h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
                    *v = v.clamp(*l, *h);
                }
            }
            FeasibleSet::Simplex { .. } => {
                return Err(Error::param(
                    "set",
                    "Euclidean projection onto the simplex is not provided",
                ))
            }
        }
        Ok(())
    }
}

fn project_ball(x: &mut [f64], center: &[f64], radius: f64) {
    let d = dist2(x, center);
    if d > radius {
        let s = radius / d;
        for (v, c) in x.iter_mut().zip(center) {
            *v = c + s * (*v - c);
        }
    }
}

/// Minimizer over `set` of `⟨a, u⟩ + β V(x, u) + β p V(z, u)`, written to
/// `out`.
///
/// Euclidean: `Π_X((x + p z − a/β) / (1 + p))`. Entropy:
/// `uᵢ ∝ xᵢ^{1/(1+p)} zᵢ^{p/(1+p)} exp(−aᵢ / (β(1+p)))`, evaluated in log space.
#[allow(clippy::too_many_arguments)]
pub fn composite_prox(
    setup: &ProxSetup,
    set: &FeasibleSet,
    a: &[f64],
    beta: f64,
    p: f64,
    x: &[f64],
    z: &[f64],
    out: &mut [f64],
) -> Result<()> {
    if !(beta > 0.0) {
        return Err(Error::param("beta", format!("must be positive, got {beta}")));
    }
    if !(p >= 0.0) {
        return Err(Error::param("p", format!("must be nonnegative, got {p}")));
    }
    let n = setup.dim;
    check_dim(n, a.len())?;
    check_dim(n, x.len())?;
    check_dim(n, z.len())?;
    check_dim(n, out.len())?;
    prox_unchecked(setup, set, a, beta, p, x, z, out)
}

/// [`composite_prox`] without argument validation, for inner loops whose
/// inputs were validated once up front.
#[allow(clippy::too_many_arguments)]
pub(crate) fn prox_unchecked(
    setup: &ProxSetup,
    set: &FeasibleSet,
    a: &[f64],
    beta: f64,
    p: f64,
    x: &[f64],
    z: &[f64],
    out: &mut [f64],
) -> Result<()> {
    // Zero linear term with coinciding anchors: the anchor is the minimizer.
    if a.iter().all(|v| *v == 0.0) && (p == 0.0 || x == z) && set.contains(x, 1e-10) {
        out.copy_from_slice(x);
        return Ok(());
    }
    let w = 1.0 / (1.0 + p);
    match setup.norm {
        NormKind::Euclidean => {
            let inv_beta = 1.0 / beta;
            for i in 0..out.len() {
                out[i] = (x[i] + p * z[i] - a[i] * inv_beta) * w;
            }
            set.project_euclidean(out)
        }
        NormKind::L1Entropy => {
            let scale = 1.0 / (beta * (1.0 + p));
            let mut max = f64::NEG_INFINITY;
            for i in 0..out.len() {
                let lx = x[i].max(SIMPLEX_FLOOR).ln();
                let lz = z[i].max(SIMPLEX_FLOOR).ln();
                out[i] = w * lx + (1.0 - w) * lz - a[i] * scale;
                max = max.max(out[i]);
            }
            let mut sum = 0.0;
            for v in out.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in out.iter_mut() {
                *v = (*v / sum).max(SIMPLEX_FLOOR);
            }
            Ok(())
        }
    }
}
