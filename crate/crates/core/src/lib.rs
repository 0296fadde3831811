//! Proximal consensus-based optimization (ProxiCBO) for composite objectives
//! `E(v) = f(v) + g(v)`, where `f` is smooth and possibly non-convex and `g`
//! is convex with an inexpensive proximal map.
//!
//! The crate is organised bottom-up:
//!
//! - [`prox`] and [`tv`]: proximal operators, Moreau-envelope gradients and
//!   regularizer values for every `g` used by the experiments.
//! - [`objective`]: smooth data-fidelity terms (one-bit quantized sensing,
//!   single-photon lidar) paired with a regularizer.
//! - [`consensus`]: particle ensembles and the numerically stable consensus point.
//! - [`solver`]: ProxiCBO, vanilla CBO, projected CBO, PG and APG.
//! - [`sim`]: seeded measurement simulators and the lidar Cramér–Rao bound.

pub mod consensus;
pub mod error;
pub mod linalg;
pub mod objective;
pub mod prox;
pub mod quadrature;
pub mod sim;
pub mod solver;
pub mod tv;

#[cfg(any(test, feature = "oracles"))]
pub mod oracles;

pub use consensus::{consensus_point, consensus_spread, ParticleEnsemble};
pub use error::{Error, Result};
pub use objective::{
    CompositeObjective, LeastSquares, LidarModel, OneBitModel, SeparableQuadratic, SmoothTerm,
};
pub use prox::{BoxBounds, ProxOperator, Regularizer};
pub use solver::{solve, Method, SolveResult, SolverConfig, Tracking};
pub use tv::{TvSettings, TvVariant};
