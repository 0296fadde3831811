//! Empirical check of the exponential decay of the ensemble's second moment
//! about the minimizer, on `E(v) = ‖v‖²` with `v* = 0`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use proxicbo::sim::rng_from_seed;
use proxicbo::solver::proxicbo_step;
use proxicbo::{CompositeObjective, Method, ParticleEnsemble, ProxOperator, SeparableQuadratic, SolverConfig};

use crate::error::{BenchError, Result};

/// Lipschitz constant of `∇‖v‖²`.
const L_F: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub dim: usize,
    pub particles: usize,
    pub dt: f64,
    pub mu: f64,
    pub lambda1: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub alpha: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Particles start uniform on `[-init_radius, init_radius]^d`.
    pub init_radius: f64,
    /// The fit uses iterations whose moment is at least this value.
    pub floor: f64,
    /// Relative slack on the predicted slope.
    pub slack: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            dim: 2,
            particles: 2000,
            dt: 0.1,
            mu: 0.01,
            lambda1: 5.5,
            sigma1: 0.1,
            sigma2: 0.001,
            alpha: 1e5,
            max_iters: 200,
            seed: 0,
            init_radius: 10.0,
            floor: 1e-4,
            slack: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    /// `2λ₁ - σ₁² - λ₂(2L_f + 1/μ) - σ₂²(2L_f + 1/μ)²` with `λ₂ = μ/Δt`.
    pub rate: f64,
    /// `-rate / 2`
    pub predicted_slope: f64,
    /// Least-squares slope of `log m(t)` against `t = kΔt`.
    pub fitted_slope: f64,
    /// `m(t_k) = (1/N) Σ_i ‖V_i - v*‖²`, starting at `k = 0`.
    pub moments: Vec<f64>,
    pub fit_points: usize,
    pub pass: bool,
}

impl TheoryConfig {
    pub fn lambda2(&self) -> f64 {
        self.mu / self.dt
    }

    pub fn rate(&self) -> f64 {
        let a = 2.0 * L_F + 1.0 / self.mu;
        2.0 * self.lambda1 - self.sigma1 * self.sigma1 - self.lambda2() * a - self.sigma2 * self.sigma2 * a * a
    }

    /// The positivity condition written out with its numbers.
    pub fn condition_text(&self) -> String {
        let a = 2.0 * L_F + 1.0 / self.mu;
        format!(
            "2λ₁ - σ₁² - λ₂(2L_f + 1/μ) - σ₂²(2L_f + 1/μ)² = {:.6} - {:.6} - {:.6} - {:.6} = {:.6} (needs > 0; λ₂ = μ/Δt = {}, L_f = {L_F})",
            2.0 * self.lambda1,
            self.sigma1 * self.sigma1,
            self.lambda2() * a,
            self.sigma2 * self.sigma2 * a * a,
            self.rate(),
            self.lambda2()
        )
    }
}

fn second_moment(ensemble: &ParticleEnsemble) -> f64 {
    ensemble.positions().iter().map(|v| v * v).sum::<f64>() / ensemble.len() as f64
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn theory_check(cfg: &TheoryConfig) -> Result<TheoryReport> {
    if cfg.particles < 2 {
        return Err(BenchError::Refused(
            "need at least 2 particles for a moment estimate".into(),
        ));
    }
    if cfg.dim == 0 || !(cfg.init_radius > 0.0) || !(cfg.floor > 0.0) || !(0.0..1.0).contains(&cfg.slack) {
        return Err(BenchError::Config(
            "dim, init_radius and floor must be positive and slack in [0, 1)".into(),
        ));
    }
    if !(cfg.rate() > 0.0) {
        return Err(BenchError::Refused(format!("condition violated: {}", cfg.condition_text())));
    }
    let objective = CompositeObjective::new(
        Arc::new(SeparableQuadratic::squared_norm(cfg.dim)),
        ProxOperator::zero(),
        "squared-norm",
    )?;
    let solver = SolverConfig {
        method: Method::ProxiCbo,
        alpha: cfg.alpha,
        lambda1: cfg.lambda1,
        sigma1: cfg.sigma1,
        sigma2: cfg.sigma2,
        mu: cfg.mu,
        dt: cfg.dt,
        max_iters: cfg.max_iters,
        n_particles: cfg.particles,
        seed: cfg.seed,
        ..SolverConfig::default()
    };
    solver.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let init: Vec<f64> = (0..cfg.particles * cfg.dim)
        .map(|_| rng.random_range(-cfg.init_radius..=cfg.init_radius))
        .collect();
    let mut ensemble = ParticleEnsemble::new(cfg.dim, init, proxicbo::sim::split_seed(cfg.seed, 1))?;
    ensemble.refresh_energies(&objective)?;

    let mut moments = vec![second_moment(&ensemble)];
    for _ in 0..cfg.max_iters {
        if *moments.last().expect("nonempty") < cfg.floor {
            break;
        }
        proxicbo_step(&mut ensemble, &objective, &solver)?;
        moments.push(second_moment(&ensemble));
    }
    let fit: Vec<(f64, f64)> = moments
        .iter()
        .enumerate()
        .take_while(|(_, m)| **m >= cfg.floor)
        .map(|(k, m)| (k as f64 * cfg.dt, m.ln()))
        .collect();
    if fit.len() < 2 {
        return Err(BenchError::Config(format!(
            "initial moment {} is already below the floor {}",
            moments[0], cfg.floor
        )));
    }
    let (t, y): (Vec<f64>, Vec<f64>) = fit.iter().copied().unzip();
    let fitted_slope = slope(&t, &y);
    let predicted_slope = -0.5 * cfg.rate();
    Ok(TheoryReport {
        rate: cfg.rate(),
        predicted_slope,
        fitted_slope,
        fit_points: fit.len(),
        pass: fitted_slope <= predicted_slope * (1.0 - cfg.slack),
        moments,
    })
}
