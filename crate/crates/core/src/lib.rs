//! Composite optimization with a mixture oracle: exact gradients for a smooth
//! term `g` and noisy one-point function values for a non-smooth term `f`.
//!
//! The crate provides
//!
//! * [`geometry`]: norms, Bregman divergences, feasible sets and the composite
//!   prox-mapping used by every method;
//! * [`sampling`]: sphere sampling, noisy value oracles and the one-point /
//!   two-point gradient estimators;
//! * [`schedule`] and [`sliding`]: the zeroth-order gradient sliding method with
//!   its theoretical parameter schedule;
//! * [`baselines`]: first- and zeroth-order mirror descent;
//! * [`network`]: gossip matrices and consensus penalties for distributed
//!   problems;
//! * [`geomedian`]: the distributed geometric-median benchmark, with
//!   [`reference`] solves for its optimal values and [`desk`] as a small problem
//!   with a closed-form solution;
//! * [`config`] and [`report`]: plain-text configs and CSV output used by the
//!   command-line runner.
//!
//! Seed sweeps, step-size grids and Monte-Carlo loops run on rayon when the
//! `parallel` feature is enabled (the default) and sequentially otherwise; both
//! paths produce bit-identical results.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod baselines;
pub mod config;
pub mod desk;
pub mod error;
pub mod geomedian;
pub mod geometry;
pub mod linalg;
pub mod network;
pub mod par;
pub mod reference;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod schedule;
pub mod sliding;

pub use error::{Error, Result};
pub use geometry::{FeasibleSet, NormKind, ProxSetup};
pub use sampling::{SmoothObjective, StochasticValueOracle, ValueOracle};
pub use schedule::SlidingSchedule;
pub use sliding::{ProblemSpec, RunTrace, TraceRecord};
