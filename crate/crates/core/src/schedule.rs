//! Theoretical parameter schedule of the sliding method.
//!
//! Outer loop (`k ≥ 1`): `β_k = 2L/k`, `γ_k = 2/(k+1)`,
//! `T_k = max{1, ⌈4N(G̃² + ρ²)k² / (3D²L²)⌉}`, with
//! `G̃² = 16 p²(n) n G²` and `ρ² = 14 n p²(n) G² + 4n² p²(n) σ²/r²`.
//!
//! Inner loop (`t ≥ 1`): `p_t = t/2`, `θ_t = 2(t+1)/(t(t+3))`, and the
//! weights `P_t = 2/((t+1)(t+2))` used in the analysis.

use crate::error::{Error, Result};

pub const DEFAULT_INNER_CAP: u64 = 1_000_000;

/// Problem constants the schedule depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleInputs {
    /// Smoothness `L` of `g`.
    pub smoothness: f64,
    /// Bregman diameter `D` of the feasible set.
    pub diameter: f64,
    /// Bound `G` on `‖∇f‖₂`.
    pub g_bound: f64,
    pub sigma: f64,
    pub r: f64,
    pub dim: usize,
    /// `p²(n)` of the proximal setup.
    pub p_squared: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlidingSchedule {
    n_outer: usize,
    smoothness: f64,
    g_tilde_sq: f64,
    rho_sq: f64,
    inner: Vec<u64>,
    capped: Vec<bool>,
}

pub fn build_schedule(inputs: &ScheduleInputs, n_outer: usize, inner_cap: u64) -> Result<SlidingSchedule> {
    if n_outer == 0 {
        return Err(Error::param("N", "need at least one outer iteration"));
    }
    if inner_cap == 0 {
        return Err(Error::param("inner_cap", "must be at least 1"));
    }
    let ScheduleInputs {
        smoothness: l,
        diameter: d,
        g_bound: g,
        sigma,
        r,
        dim,
        p_squared: p2,
    } = *inputs;
    if !(l > 0.0) || !(d > 0.0) || !(g > 0.0) || !(r > 0.0) || !(sigma >= 0.0) {
        return Err(Error::param(
            "schedule",
            format!("need L, D, G, r > 0 and σ ≥ 0 (L={l}, D={d}, G={g}, r={r}, σ={sigma})"),
        ));
    }
    let n = dim as f64;
    let g_tilde_sq = 16.0 * p2 * n * g * g;
    let rho_sq = 14.0 * n * p2 * g * g + 4.0 * n * n * p2 * sigma * sigma / (r * r);
    let coeff = 4.0 * n_outer as f64 * (g_tilde_sq + rho_sq) / (3.0 * d * d * l * l);
    let mut inner = Vec::with_capacity(n_outer);
    let mut capped = Vec::with_capacity(n_outer);
    for k in 1..=n_outer {
        let kf = k as f64;
        let raw = coeff * kf * kf;
        // Shave a few ulps so values that are integers in exact arithmetic do
        // not round up past themselves.
        let t = (raw - raw * 4.0 * f64::EPSILON).ceil().max(1.0);
        if t > inner_cap as f64 {
            inner.push(inner_cap);
            capped.push(true);
        } else {
            inner.push(t as u64);
            capped.push(false);
        }
    }
    Ok(SlidingSchedule {
        n_outer,
        smoothness: l,
        g_tilde_sq,
        rho_sq,
        inner,
        capped,
    })
}

impl SlidingSchedule {
    pub fn n_outer(&self) -> usize {
        self.n_outer
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn g_tilde_sq(&self) -> f64 {
        self.g_tilde_sq
    }

    pub fn rho_sq(&self) -> f64 {
        self.rho_sq
    }

    pub fn beta(&self, k: usize) -> f64 {
        2.0 * self.smoothness / k as f64
    }

    pub fn gamma(&self, k: usize) -> f64 {
        gamma(k)
    }

    /// `T_k` for `1 ≤ k ≤ N`.
    pub fn inner_iters(&self, k: usize) -> u64 {
        self.inner[k - 1]
    }

    pub fn inner_all(&self) -> &[u64] {
        &self.inner
    }

    pub fn is_capped(&self, k: usize) -> bool {
        self.capped[k - 1]
    }

    pub fn any_capped(&self) -> bool {
        self.capped.iter().any(|c| *c)
    }

    /// `Σ_k T_k`.
    pub fn total_inner(&self) -> u64 {
        self.inner.iter().sum()
    }

    /// Left side of the monotonicity condition `γ_kβ_k / (Γ_k(1 − P_{T_k}))`.
    pub fn monotone_weight(&self, k: usize) -> f64 {
        let t = self.inner_iters(k) as usize;
        self.gamma(k) * self.beta(k) / (big_gamma(k) * (1.0 - big_p(t)))
    }
}

pub fn gamma(k: usize) -> f64 {
    2.0 / (k as f64 + 1.0)
}

pub fn prox_weight(t: usize) -> f64 {
    t as f64 / 2.0
}

pub fn theta(t: usize) -> f64 {
    let t = t as f64;
    2.0 * (t + 1.0) / (t * (t + 3.0))
}

/// `P_t = 2/((t+1)(t+2))`; `P_0 = 1`.
pub fn big_p(t: usize) -> f64 {
    let t = t as f64;
    2.0 / ((t + 1.0) * (t + 2.0))
}

/// `Γ_k = 2/(k(k+1))`.
pub fn big_gamma(k: usize) -> f64 {
    let k = k as f64;
    2.0 / (k * (k + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_inputs() -> ScheduleInputs {
        ScheduleInputs {
            smoothness: 1.0,
            diameter: 1.0,
            g_bound: 1.0,
            sigma: 0.0,
            r: 1e-3,
            dim: 2,
            p_squared: 3.0,
        }
    }

    #[test]
    fn first_outer_step() {
        let s = build_schedule(&unit_inputs(), 3, DEFAULT_INNER_CAP).unwrap();
        assert_eq!(s.beta(1), 2.0);
        assert_eq!(s.gamma(1), 1.0);
        for k in 1..=3 {
            assert!(s.beta(k) - s.smoothness() * s.gamma(k) >= 0.0);
        }
    }

    #[test]
    fn first_inner_step() {
        assert_eq!(prox_weight(1), 0.5);
        assert_eq!(theta(1), 1.0);
        assert!((big_p(1) - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(big_p(0), 1.0);
        assert!((big_p(1) - prox_weight(1) / (1.0 + prox_weight(1)) * big_p(0)).abs() < 1e-16);
    }

    #[test]
    fn inner_count_worked_example() {
        let s = build_schedule(&unit_inputs(), 2, DEFAULT_INNER_CAP).unwrap();
        assert_eq!(s.g_tilde_sq(), 96.0);
        assert_eq!(s.rho_sq(), 84.0);
        assert_eq!(s.inner_iters(1), 480);
        assert_eq!(s.inner_iters(2), 1920);
        assert_eq!(s.total_inner(), 2400);
    }

    #[test]
    fn inner_count_never_below_one() {
        let mut inp = unit_inputs();
        inp.diameter = 1e6;
        let s = build_schedule(&inp, 4, DEFAULT_INNER_CAP).unwrap();
        assert!(s.inner_all().iter().all(|t| *t == 1));
    }

    #[test]
    fn cap_is_applied_and_flagged() {
        let mut inp = unit_inputs();
        inp.sigma = 1.0;
        inp.r = 1e-6;
        let s = build_schedule(&inp, 3, 1000).unwrap();
        assert!(s.any_capped());
        assert_eq!(s.inner_iters(3), 1000);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(build_schedule(&unit_inputs(), 0, 10).is_err());
        let mut inp = unit_inputs();
        inp.smoothness = 0.0;
        assert!(build_schedule(&inp, 1, 10).is_err());
    }
}
