//! ProxiCBO and the baselines it is compared against.
//!
//! All methods share the [`CompositeObjective`] interface. PG and APG treat
//! the `N` initial rows as `N` independent restarts.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consensus::{consensus_spread, ParticleEnsemble};
use crate::error::{Error, Result};
use crate::linalg::{check_dim, dist_inf};
use crate::objective::CompositeObjective;
use crate::prox::BoxBounds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "proxicbo")]
    ProxiCbo,
    Cbo,
    #[serde(rename = "projcbo")]
    ProjCbo,
    Pg,
    Apg,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ProxiCbo,
        Method::Cbo,
        Method::ProjCbo,
        Method::Pg,
        Method::Apg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::ProxiCbo => "proxicbo",
            Method::Cbo => "cbo",
            Method::ProjCbo => "projcbo",
            Method::Pg => "pg",
            Method::Apg => "apg",
        }
    }

    pub fn is_particle_method(self) -> bool {
        matches!(self, Method::ProxiCbo | Method::Cbo | Method::ProjCbo)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

/// Which particle is reported at exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tracking {
    /// Lowest energy seen at any iteration.
    #[default]
    HistoricalBest,
    /// Lowest energy at the last iteration.
    FinalBest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Inverse temperature of the consensus weights.
    pub alpha: f64,
    /// Drift toward the consensus point.
    pub lambda1: f64,
    /// Consensus noise amplitude.
    pub sigma1: f64,
    /// Prox-gradient noise amplitude (ProxiCBO only).
    pub sigma2: f64,
    /// Prox / gradient step. ProxiCBO realises `λ₂ Δt = mu`.
    pub mu: f64,
    pub dt: f64,
    pub max_iters: usize,
    pub n_particles: usize,
    pub seed: u64,
    pub track: Tracking,
    /// Early stop once the consensus spread (or, for PG/APG, the largest
    /// per-restart move) falls to this value; 0 disables.
    pub stop_tol: f64,
    pub record_trajectory: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::ProxiCbo,
            alpha: 1e5,
            lambda1: 1.0,
            sigma1: 1.0,
            sigma2: 1.0,
            mu: 0.01,
            dt: 0.1,
            max_iters: 1000,
            n_particles: 100,
            seed: 0,
            track: Tracking::HistoricalBest,
            stop_tol: 0.0,
            record_trajectory: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64| {
            Err(Error::InvalidParameter(format!("{name} has invalid value {v}")))
        };
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::NonPositiveStep(self.mu));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", self.dt);
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda1", self.lambda1),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("stop_tol", self.stop_tol),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, v);
            }
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidParameter("n_particles must be at least 1".into()));
        }
        Ok(())
    }
}

/// Standard-normal draws for one iteration, row-major `N × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub consensus: Vec<f64>,
    pub gradient: Vec<f64>,
}

impl Noise {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            consensus: vec![0.0; n * dim],
            gradient: vec![0.0; n * dim],
        }
    }
}

/// Draws `d` normals per particle for the consensus term and, if
/// `with_gradient`, `d` more for the prox-gradient term, each from that
/// particle's own stream.
pub fn draw_noise(ensemble: &mut ParticleEnsemble, with_gradient: bool) -> Noise {
    let dim = ensemble.dim();
    let n = ensemble.len();
    let mut noise = Noise {
        consensus: vec![0.0; n * dim],
        gradient: if with_gradient {
            vec![0.0; n * dim]
        } else {
            Vec::new()
        },
    };
    if with_gradient {
        ensemble
            .rngs_mut()
            .par_iter_mut()
            .zip(noise.consensus.par_chunks_mut(dim))
            .zip(noise.gradient.par_chunks_mut(dim))
            .for_each(|((rng, z1), z2)| {
                z1.iter_mut().for_each(|z| *z = StandardNormal.sample(rng));
                z2.iter_mut().for_each(|z| *z = StandardNormal.sample(rng));
            });
    } else {
        ensemble
            .rngs_mut()
            .par_iter_mut()
            .zip(noise.consensus.par_chunks_mut(dim))
            .for_each(|(rng, z1)| {
                z1.iter_mut().for_each(|z| *z = StandardNormal.sample(rng));
            });
    }
    noise
}

fn first_error(results: Vec<Result<()>>) -> Result<()> {
    results.into_iter().collect()
}

fn check_finite(v: &[f64], particle: usize, iteration: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence {
            particle,
            iteration,
        })
    }
}

/// One ProxiCBO iteration with freshly drawn noise.
pub fn proxicbo_step(
    ensemble: &mut ParticleEnsemble,
    objective: &CompositeObjective,
    config: &SolverConfig,
) -> Result<()> {
    let noise = draw_noise(ensemble, true);
    proxicbo_step_with_noise(ensemble, objective, config, &noise)
}

/// One ProxiCBO iteration with the given standard-normal draws:
///
/// ```text
/// V ← V - λ₁(V - v_α)Δt + σ₁ D(V - v_α) z¹ √Δt + σ₂ D(r(V)) z² √Δt
/// V ← prox_{μg}(V - μ∇f(V))
/// ```
///
/// where `r(V) = (V - prox_{μg}(V - μ∇f(V))) / μ` and `D = diag`.
pub fn proxicbo_step_with_noise(
    ensemble: &mut ParticleEnsemble,
    objective: &CompositeObjective,
    config: &SolverConfig,
    noise: &Noise,
) -> Result<()> {
    let dim = ensemble.dim();
    check_dim(objective.dim(), dim)?;
    check_dim(ensemble.len() * dim, noise.consensus.len())?;
    if config.sigma2 != 0.0 {
        check_dim(ensemble.len() * dim, noise.gradient.len())?;
    }
    let va = ensemble.consensus_point(config.alpha)?;
    let iteration = ensemble.iteration();
    let (l1, s1, s2, mu, dt) = (
        config.lambda1,
        config.sigma1,
        config.sigma2,
        config.mu,
        config.dt,
    );
    let sqdt = dt.sqrt();
    let results: Vec<Result<()>> = ensemble
        .positions_mut()
        .par_chunks_mut(dim)
        .enumerate()
        .map(|(i, v)| {
            let z1 = &noise.consensus[i * dim..(i + 1) * dim];
            let resid = if s2 != 0.0 {
                Some(objective.prox_gradient_residual(v, mu)?)
            } else {
                None
            };
            for k in 0..dim {
                let diff = v[k] - va[k];
                let mut next = v[k] - l1 * diff * dt + s1 * diff * z1[k] * sqdt;
                if let Some(r) = &resid {
                    next += s2 * r[k] * noise.gradient[i * dim + k] * sqdt;
                }
                v[k] = next;
            }
            check_finite(v, i, iteration)?;
            let moved = objective.forward_backward(v, mu)?;
            check_finite(&moved, i, iteration)?;
            v.copy_from_slice(&moved);
            Ok(())
        })
        .collect();
    first_error(results)?;
    ensemble.advance_iteration();
    ensemble.refresh_energies(objective)
}

/// One anisotropic CBO iteration with freshly drawn noise.
pub fn cbo_step(
    ensemble: &mut ParticleEnsemble,
    objective: &CompositeObjective,
    config: &SolverConfig,
) -> Result<()> {
    let noise = draw_noise(ensemble, false);
    cbo_step_with_noise(ensemble, objective, config, &noise, None)
}

/// `V ← V - λ₁(V - v_α)Δt + σ₁ D(V - v_α) z √Δt`, optionally followed by
/// projection onto `bounds`.
pub fn cbo_step_with_noise(
    ensemble: &mut ParticleEnsemble,
    objective: &CompositeObjective,
    config: &SolverConfig,
    noise: &Noise,
    bounds: Option<&BoxBounds>,
) -> Result<()> {
    let dim = ensemble.dim();
    check_dim(objective.dim(), dim)?;
    check_dim(ensemble.len() * dim, noise.consensus.len())?;
    if let Some(b) = bounds {
        check_dim(dim, b.dim())?;
    }
    let va = ensemble.consensus_point(config.alpha)?;
    let iteration = ensemble.iteration();
    let (l1, s1, dt) = (config.lambda1, config.sigma1, config.dt);
    let sqdt = dt.sqrt();
    let results: Vec<Result<()>> = ensemble
        .positions_mut()
        .par_chunks_mut(dim)
        .enumerate()
        .map(|(i, v)| {
            let z = &noise.consensus[i * dim..(i + 1) * dim];
            for k in 0..dim {
                let diff = v[k] - va[k];
                v[k] = v[k] - l1 * diff * dt + s1 * diff * z[k] * sqdt;
            }
            check_finite(v, i, iteration)?;
            if let Some(b) = bounds {
                b.project_in_place(v);
            }
            Ok(())
        })
        .collect();
    first_error(results)?;
    ensemble.advance_iteration();
    ensemble.refresh_energies(objective)
}

/// Projected CBO: a CBO step on `objective` (which should exclude the
/// indicator) followed by Euclidean projection onto `bounds`.
pub fn projcbo_step(
    ensemble: &mut ParticleEnsemble,
    objective: &CompositeObjective,
    bounds: Option<&BoxBounds>,
    config: &SolverConfig,
) -> Result<()> {
    let noise = draw_noise(ensemble, false);
    cbo_step_with_noise(ensemble, objective, config, &noise, bounds)
}

/// Proximal gradient step `x ← prox_{μg}(x - μ∇f(x))`.
pub fn pg_step(x: &[f64], objective: &CompositeObjective, mu: f64) -> Result<Vec<f64>> {
    let out = objective.forward_backward(x, mu)?;
    check_finite(&out, 0, 0)?;
    Ok(out)
}

/// FISTA state for one restart.
#[derive(Debug, Clone, PartialEq)]
pub struct ApgState {
    pub x: Vec<f64>,
    pub x_prev: Vec<f64>,
    pub y: Vec<f64>,
    pub t: f64,
}

impl ApgState {
    pub fn new(x0: Vec<f64>) -> Self {
        Self {
            x_prev: x0.clone(),
            y: x0.clone(),
            x: x0,
            t: 1.0,
        }
    }
}

/// `x⁺ = prox_{μg}(y - μ∇f(y))`, `t⁺ = (1 + √(1 + 4t²))/2`,
/// `y⁺ = x⁺ + ((t - 1)/t⁺)(x⁺ - x)`.
pub fn apg_step(state: &mut ApgState, objective: &CompositeObjective, mu: f64) -> Result<()> {
    let x_new = objective.forward_backward(&state.y, mu)?;
    check_finite(&x_new, 0, 0)?;
    let t_new = 0.5 * (1.0 + (1.0 + 4.0 * state.t * state.t).sqrt());
    let beta = (state.t - 1.0) / t_new;
    for k in 0..x_new.len() {
        state.y[k] = x_new[k] + beta * (x_new[k] - state.x[k]);
    }
    state.x_prev = std::mem::replace(&mut state.x, x_new);
    state.t = t_new;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub method: Method,
    pub estimate: Vec<f64>,
    /// `E(estimate)`, recomputed at exit.
    pub objective_value: f64,
    pub iterations_run: usize,
    /// Per-iteration `(best_energy, spread)`; spread is the consensus spread
    /// for particle methods and the largest restart move for PG/APG.
    pub trajectory: Option<Vec<(f64, f64)>>,
}

/// Runs `config.method` from the row-major `N × d` ensemble `initial`.
pub fn solve(objective: &CompositeObjective, initial: &[f64], config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    let dim = objective.dim();
    let mut ensemble = ParticleEnsemble::new(dim, initial.to_vec(), config.seed)?;
    ensemble.refresh_energies(objective)?;
    if let (Method::Pg | Method::Apg, Some(l)) = (config.method, objective.smooth().lipschitz()) {
        if config.mu * l > 1.0 + 1e-12 {
            log::debug!(
                "{}: step {} exceeds 1/L_f = {}; monotone descent not guaranteed",
                config.method,
                config.mu,
                1.0 / l
            );
        }
    }
    let mut trajectory = config.record_trajectory.then(Vec::new);

    let iterations_run = match config.method {
        Method::ProxiCbo | Method::Cbo | Method::ProjCbo => {
            run_particles(&mut ensemble, objective, config, &mut trajectory)?
        }
        Method::Pg | Method::Apg => run_restarts(&mut ensemble, objective, config, &mut trajectory)?,
    };

    let estimate = match config.track {
        Tracking::HistoricalBest => ensemble.best_position().to_vec(),
        Tracking::FinalBest => {
            let (i, _) = ensemble.current_best();
            ensemble.particle(i).to_vec()
        }
    };
    if estimate.iter().any(|x| !x.is_finite()) {
        return Err(Error::EmptyConsensusSupport);
    }
    let objective_value = objective.energy(&estimate)?;
    Ok(SolveResult {
        method: config.method,
        estimate,
        objective_value,
        iterations_run,
        trajectory,
    })
}

fn run_particles(
    ensemble: &mut ParticleEnsemble,
    objective: &CompositeObjective,
    config: &SolverConfig,
    trajectory: &mut Option<Vec<(f64, f64)>>,
) -> Result<usize> {
    let dim = ensemble.dim();
    let (relaxed, bounds) = if config.method == Method::ProjCbo {
        let g = objective.regularizer();
        (
            Some(objective.with_regularizer(g.without_constraints(), objective.label())?),
            g.constraint_box(),
        )
    } else {
        (None, None)
    };
    for k in 0..config.max_iters {
        match config.method {
            Method::ProxiCbo => proxicbo_step(ensemble, objective, config)?,
            Method::Cbo => cbo_step(ensemble, objective, config)?,
            Method::ProjCbo => {
                projcbo_step(ensemble, relaxed.as_ref().unwrap_or(objective), bounds.as_ref(), config)?
            }
            Method::Pg | Method::Apg => unreachable!(),
        }
        if trajectory.is_some() || config.stop_tol > 0.0 {
            let spread = match ensemble.consensus_point(config.alpha) {
                Ok(va) => consensus_spread(ensemble.positions(), dim, &va),
                Err(_) => f64::INFINITY,
            };
            if let Some(t) = trajectory.as_mut() {
                t.push((ensemble.best_energy(), spread));
            }
            if config.stop_tol > 0.0 && spread <= config.stop_tol {
                return Ok(k + 1);
            }
        }
    }
    Ok(config.max_iters)
}

fn run_restarts(
    ensemble: &mut ParticleEnsemble,
    objective: &CompositeObjective,
    config: &SolverConfig,
    trajectory: &mut Option<Vec<(f64, f64)>>,
) -> Result<usize> {
    let dim = ensemble.dim();
    let mu = config.mu;
    let mut states: Vec<ApgState> = ensemble
        .positions()
        .chunks(dim)
        .map(|r| ApgState::new(r.to_vec()))
        .collect();
    for k in 0..config.max_iters {
        let iteration = ensemble.iteration();
        let moves: Vec<Result<f64>> = states
            .par_iter_mut()
            .enumerate()
            .map(|(i, s)| {
                let before = s.x.clone();
                let stepped = match config.method {
                    Method::Pg => pg_step(&s.x, objective, mu).map(|x| s.x = x),
                    _ => apg_step(s, objective, mu),
                };
                stepped.map_err(|e| match e {
                    Error::Divergence { .. } => Error::Divergence {
                        particle: i,
                        iteration,
                    },
                    other => other,
                })?;
                Ok(dist_inf(&before, &s.x))
            })
            .collect();
        let mut largest_move = 0.0f64;
        for m in moves {
            largest_move = largest_move.max(m?);
        }
        for (row, s) in ensemble.positions_mut().chunks_mut(dim).zip(&states) {
            row.copy_from_slice(&s.x);
        }
        ensemble.advance_iteration();
        ensemble.refresh_energies(objective)?;
        if let Some(t) = trajectory.as_mut() {
            t.push((ensemble.best_energy(), largest_move));
        }
        if config.stop_tol > 0.0 && largest_move <= config.stop_tol {
            return Ok(k + 1);
        }
    }
    Ok(config.max_iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::SeparableQuadratic;
    use crate::prox::ProxOperator;
    use std::sync::Arc;

    fn quadratic(dim: usize) -> CompositeObjective {
        CompositeObjective::new(
            Arc::new(SeparableQuadratic::new(vec![1.0; dim], vec![0.0; dim]).unwrap()),
            ProxOperator::zero(),
            "half-norm",
        )
        .unwrap()
    }

    #[test]
    fn pg_on_half_square_with_unit_step_jumps_to_zero() {
        let obj = quadratic(3);
        assert_eq!(pg_step(&[4.0, -2.0, 7.5], &obj, 1.0).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn first_apg_step_equals_pg_step() {
        let obj = CompositeObjective::new(
            Arc::new(SeparableQuadratic::new(vec![1.0, 3.0], vec![0.5, -1.0]).unwrap()),
            ProxOperator::l1(0.2).unwrap(),
            "q",
        )
        .unwrap();
        let x0 = vec![2.0, 2.0];
        let mut s = ApgState::new(x0.clone());
        apg_step(&mut s, &obj, 0.1).unwrap();
        assert_eq!(s.x, pg_step(&x0, &obj, 0.1).unwrap());
    }

    #[test]
    fn zero_iterations_return_initial_best() {
        let obj = quadratic(1);
        let cfg = SolverConfig {
            max_iters: 0,
            ..SolverConfig::default()
        };
        let r = solve(&obj, &[3.0, -0.5, 2.0], &cfg).unwrap();
        assert_eq!(r.estimate, vec![-0.5]);
        assert_eq!(r.iterations_run, 0);
        assert_eq!(r.objective_value, 0.125);
    }

    #[test]
    fn divergence_is_reported_with_particle_and_iteration() {
        // Step far beyond 2/L makes gradient descent blow up.
        let obj = quadratic(1);
        let cfg = SolverConfig {
            method: Method::Pg,
            mu: 1e6,
            max_iters: 500,
            ..SolverConfig::default()
        };
        match solve(&obj, &[1.0, 1.0], &cfg) {
            Err(Error::Divergence { particle, .. }) => assert_eq!(particle, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn cbo_without_noise_contracts() {
        let obj = quadratic(2);
        let cfg = SolverConfig {
            method: Method::Cbo,
            sigma1: 0.0,
            lambda1: 1.0,
            dt: 0.1,
            alpha: 1.0,
            ..SolverConfig::default()
        };
        let mut ens =
            ParticleEnsemble::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, -2.0]], 1).unwrap();
        ens.refresh_energies(&obj).unwrap();
        let spread = |e: &ParticleEnsemble| {
            let va = e.consensus_point(cfg.alpha).unwrap();
            consensus_spread(e.positions(), 2, &va)
        };
        let mut prev = spread(&ens);
        for _ in 0..20 {
            cbo_step(&mut ens, &obj, &cfg).unwrap();
            let s = spread(&ens);
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            mu: 0.0,
            ..SolverConfig::default()
        };
        assert_eq!(bad.validate(), Err(Error::NonPositiveStep(0.0)));
        let bad = SolverConfig {
            n_particles: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
    }
}
