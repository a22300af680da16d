//! Gossip matrices and consensus penalties for distributed problems.
//!
//! Device variables are stacked row-major into one flat vector of length
//! `M·n` (row `m` holds `x_m`). The gossip matrix is the unnormalized graph
//! Laplacian `Deg − Adj` of the communication graph.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dist2, norm2};
use crate::rng::{self, Stream};
use crate::sampling::SmoothObjective;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 1_000_000;
const POWER_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Topology {
    Star,
    Cycle,
    Chain,
    Complete,
}

impl Topology {
    pub const ALL: [Topology; 4] = [Topology::Star, Topology::Cycle, Topology::Chain, Topology::Complete];

    pub fn name(self) -> &'static str {
        match self {
            Topology::Star => "star",
            Topology::Cycle => "cycle",
            Topology::Chain => "chain",
            Topology::Complete => "complete",
        }
    }

    fn edges(self, m: usize) -> Vec<(usize, usize)> {
        match self {
            Topology::Star => (1..m).map(|j| (0, j)).collect(),
            Topology::Chain => (0..m - 1).map(|i| (i, i + 1)).collect(),
            // Two devices share a single link.
            Topology::Cycle if m == 2 => vec![(0, 1)],
            Topology::Cycle => (0..m).map(|i| (i, (i + 1) % m)).collect(),
            Topology::Complete => (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect(),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "star" => Ok(Topology::Star),
            "cycle" | "ring" => Ok(Topology::Cycle),
            "chain" | "path" => Ok(Topology::Chain),
            "complete" | "full" => Ok(Topology::Complete),
            _ => Err(Error::UnknownTopology(s.to_string())),
        }
    }
}

/// Graph Laplacian of a topology together with its dominant eigenvalue.
#[derive(Clone, Debug)]
pub struct GossipMatrix {
    topology: Topology,
    w: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
    lambda_max: f64,
}

pub fn build_gossip(topology: Topology, m: usize) -> Result<GossipMatrix> {
    if m < 2 {
        return Err(Error::param("M", format!("need at least 2 devices, got {m}")));
    }
    let mut neighbors = vec![Vec::new(); m];
    let mut w = DMatrix::zeros(m, m);
    for (i, j) in topology.edges(m) {
        neighbors[i].push(j);
        neighbors[j].push(i);
        w[(i, j)] -= 1.0;
        w[(j, i)] -= 1.0;
        w[(i, i)] += 1.0;
        w[(j, j)] += 1.0;
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    let mut g = GossipMatrix {
        topology,
        w,
        neighbors,
        lambda_max: 0.0,
    };
    g.lambda_max = g.power_iteration()?;
    Ok(g)
}

impl GossipMatrix {
    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn size(&self) -> usize {
        self.neighbors.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `out = W v` for a vector with one entry per device.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (i, nb) in self.neighbors.iter().enumerate() {
            let mut acc = nb.len() as f64 * v[i];
            for &j in nb {
                acc -= v[j];
            }
            out[i] = acc;
        }
    }

    /// `out = W X` for a stacked `M × n` point.
    pub fn apply_stacked(&self, x: &[f64], n: usize, out: &mut [f64]) {
        for (i, nb) in self.neighbors.iter().enumerate() {
            let deg = nb.len() as f64;
            let row = &mut out[i * n..(i + 1) * n];
            for c in 0..n {
                row[c] = deg * x[i * n + c];
            }
            for &j in nb {
                for c in 0..n {
                    row[c] -= x[j * n + c];
                }
            }
        }
    }

    fn power_iteration(&self) -> Result<f64> {
        let m = self.size();
        // Fixed-seed Gaussian start, with the consensus direction projected out.
        let mut rng = rng::stream(POWER_SEED, Stream::Aux);
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mean = v.iter().sum::<f64>() / m as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut wv = vec![0.0; m];
        let mut residual = f64::INFINITY;
        for _ in 0..POWER_MAX_ITERS {
            self.apply(&v, &mut wv);
            let mu: f64 = v.iter().zip(&wv).map(|(a, b)| a * b).sum();
            residual = v.iter().zip(&wv).map(|(a, b)| (b - mu * a).powi(2)).sum::<f64>().sqrt();
            if residual <= POWER_TOL * mu.abs().max(f64::MIN_POSITIVE) {
                return Ok(mu);
            }
            let nw = norm2(&wv);
            for (a, b) in v.iter_mut().zip(&wv) {
                *a = b / nw;
            }
        }
        Err(Error::NonConvergence {
            iterations: POWER_MAX_ITERS,
            residual,
        })
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.w.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    /// Smallest positive eigenvalue `λ⁺_min(W)`.
    pub fn lambda_min_positive(&self) -> f64 {
        let ev = self.eigenvalues();
        let top = ev.last().copied().unwrap_or(0.0);
        ev.into_iter().find(|&e| e > 1e-9 * top).unwrap_or(0.0)
    }

    /// Row-major, space-separated dump of `W`, one row per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in 0..self.size() {
            let row: Vec<String> = (0..self.size()).map(|j| format!("{}", self.w[(i, j)])).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Device variables `X = [x_1, …, x_M]ᵀ`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedPoint {
    pub m: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl StackedPoint {
    pub fn new(m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(m * n, data.len())?;
        Ok(StackedPoint { m, n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * n);
        for r in rows {
            check_dim(n, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(StackedPoint { m: rows.len(), n, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn mean_row(&self) -> Vec<f64> {
        row_mean(&self.data, self.m, self.n)
    }
}

fn row_mean(x: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut mean = vec![0.0; n];
    for row in x.chunks_exact(n) {
        for (a, b) in mean.iter_mut().zip(row) {
            *a += b;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m as f64);
    mean
}

/// Scaling of the decentralized penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyFactor {
    /// `λ tr(XᵀWX)`, gradient `2λWX`.
    PaperEq3,
    /// `(λ/2) tr(XᵀWX)`, gradient `λWX`.
    ExperimentHalf,
}

impl PenaltyFactor {
    fn scale(self) -> f64 {
        match self {
            PenaltyFactor::PaperEq3 => 1.0,
            PenaltyFactor::ExperimentHalf => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PenaltyFactor::PaperEq3 => "paper_eq3",
            PenaltyFactor::ExperimentHalf => "experiment_half",
        }
    }
}

impl FromStr for PenaltyFactor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "paper_eq3" => Ok(PenaltyFactor::PaperEq3),
            "experiment_half" => Ok(PenaltyFactor::ExperimentHalf),
            other => Err(Error::param(
                "penalty_factor",
                format!("expected paper_eq3 or experiment_half, got {other:?}"),
            )),
        }
    }
}

/// `(λ/M) Σ ‖x_m − x̄‖²` and its gradient `(2λ/M)(x_m − x̄)`.
pub fn centralized_penalty(x: &StackedPoint, lambda: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; x.data.len()];
    let value = centralized_into(&x.data, x.m, x.n, lambda, &mut grad);
    (value, grad)
}

fn centralized_into(x: &[f64], m: usize, n: usize, lambda: f64, grad: &mut [f64]) -> f64 {
    let mean = row_mean(x, m, n);
    let c = lambda / m as f64;
    let mut value = 0.0;
    for (row, g) in x.chunks_exact(n).zip(grad.chunks_exact_mut(n)) {
        for i in 0..n {
            let d = row[i] - mean[i];
            value += d * d;
            g[i] = 2.0 * c * d;
        }
    }
    c * value
}

/// `c·λ tr(XᵀWX)` and its gradient `2cλ WX`, with `c` set by `factor`.
pub fn decentralized_penalty(
    x: &StackedPoint,
    lambda: f64,
    w: &GossipMatrix,
    factor: PenaltyFactor,
) -> Result<(f64, Vec<f64>)> {
    check_dim(w.size(), x.m)?;
    let mut grad = vec![0.0; x.data.len()];
    let value = decentralized_into(&x.data, x.n, lambda, w, factor, &mut grad);
    Ok((value, grad))
}

fn decentralized_into(
    x: &[f64],
    n: usize,
    lambda: f64,
    w: &GossipMatrix,
    factor: PenaltyFactor,
    grad: &mut [f64],
) -> f64 {
    w.apply_stacked(x, n, grad);
    let quad: f64 = x.iter().zip(grad.iter()).map(|(a, b)| a * b).sum();
    let c = factor.scale() * lambda;
    grad.iter_mut().for_each(|g| *g *= 2.0 * c);
    c * quad
}

/// `max_m ‖x_m − x̄‖₂`.
pub fn consensus_gap(x: &StackedPoint) -> f64 {
    let mean = x.mean_row();
    (0..x.m).map(|i| dist2(x.row(i), &mean)).fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub enum Penalty {
    Centralized {
        lambda: f64,
    },
    Decentralized {
        lambda: f64,
        gossip: Arc<GossipMatrix>,
        factor: PenaltyFactor,
    },
}

impl Penalty {
    pub fn lambda(&self) -> f64 {
        match self {
            Penalty::Centralized { lambda } | Penalty::Decentralized { lambda, .. } => *lambda,
        }
    }
}

/// A consensus penalty as the smooth part `g` of a stacked problem.
#[derive(Clone, Debug)]
pub struct PenaltyObjective {
    pub penalty: Penalty,
    pub m: usize,
    pub n: usize,
}

impl PenaltyObjective {
    pub fn new(penalty: Penalty, m: usize, n: usize) -> Result<Self> {
        if !(penalty.lambda() >= 0.0) {
            return Err(Error::param("lambda", "must be nonnegative"));
        }
        if let Penalty::Decentralized { gossip, .. } = &penalty {
            check_dim(gossip.size(), m)?;
        }
        Ok(PenaltyObjective { penalty, m, n })
    }
}

impl SmoothObjective for PenaltyObjective {
    fn dim(&self) -> usize {
        self.m * self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut scratch = vec![0.0; x.len()];
        match &self.penalty {
            Penalty::Centralized { lambda } => centralized_into(x, self.m, self.n, *lambda, &mut scratch),
            Penalty::Decentralized { lambda, gossip, factor } => {
                decentralized_into(x, self.n, *lambda, gossip, *factor, &mut scratch)
            }
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match &self.penalty {
            Penalty::Centralized { lambda } => {
                centralized_into(x, self.m, self.n, *lambda, out);
            }
            Penalty::Decentralized { lambda, gossip, factor } => {
                decentralized_into(x, self.n, *lambda, gossip, *factor, out);
            }
        }
    }

    /// `2λ/M` for the centralized penalty, `2cλ·λ_max(W)` for the
    /// decentralized one.
    fn smoothness(&self) -> f64 {
        match &self.penalty {
            Penalty::Centralized { lambda } => 2.0 * lambda / self.m as f64,
            Penalty::Decentralized { lambda, gossip, factor } => 2.0 * factor.scale() * lambda * gossip.lambda_max(),
        }
    }
}
