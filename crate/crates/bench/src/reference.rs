use serde::{Deserialize, Serialize};

use proxicbo::solver::pg_step;
use proxicbo::CompositeObjective;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSettings {
    /// Stop once successive objective values differ by at most this much.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for ReferenceSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceResult {
    pub point: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs PG with step `mu` from `start` (the ground truth) and returns the
/// endpoint `v*` with `E(v*)`.
pub fn reference_minimizer(
    objective: &CompositeObjective,
    start: &[f64],
    mu: f64,
    settings: &ReferenceSettings,
) -> Result<ReferenceResult> {
    let mut x = start.to_vec();
    let mut e = objective.energy(&x)?;
    for k in 1..=settings.max_iters {
        let next = pg_step(&x, objective, mu)?;
        let e_next = objective.energy(&next)?;
        let change = (e_next - e).abs();
        x = next;
        e = e_next;
        if change <= settings.tol {
            return Ok(ReferenceResult {
                point: x,
                energy: e,
                iterations: k,
                converged: true,
            });
        }
    }
    log::warn!(
        "reference PG did not converge in {} iterations (E = {e})",
        settings.max_iters
    );
    Ok(ReferenceResult {
        point: x,
        energy: e,
        iterations: settings.max_iters,
        converged: false,
    })
}
