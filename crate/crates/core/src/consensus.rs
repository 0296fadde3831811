//! Particle ensembles and the consensus point `v_α`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::check_dim;
use crate::objective::CompositeObjective;

/// `N` particles in `R^d` with cached energies, historical best and one
/// independent random stream per particle.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    dim: usize,
    positions: Vec<f64>,
    energies: Vec<f64>,
    best_position: Vec<f64>,
    best_energy: f64,
    rngs: Vec<ChaCha8Rng>,
    iteration: usize,
}

impl ParticleEnsemble {
    /// Ensemble from row-major positions. Energies start stale; call
    /// [`ParticleEnsemble::refresh_energies`] before use.
    ///
    /// Particle `i` draws noise from ChaCha8 stream `i` of `seed`, so its
    /// noise sequence does not depend on scheduling.
    pub fn new(dim: usize, positions: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "ensemble needs N ≥ 1 rows of length {dim}, got {} values",
                positions.len()
            )));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("initial positions must be finite".into()));
        }
        let n = positions.len() / dim;
        let rngs = (0..n)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                rng
            })
            .collect();
        Ok(Self {
            dim,
            positions,
            energies: vec![f64::INFINITY; n],
            best_position: vec![f64::NAN; dim],
            best_energy: f64::INFINITY,
            rngs,
            iteration: 0,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            check_dim(dim, r.len())?;
            flat.extend_from_slice(r);
        }
        Self::new(dim, flat, seed)
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn best_position(&self) -> &[f64] {
        &self.best_position
    }

    pub fn best_energy(&self) -> f64 {
        self.best_energy
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub(crate) fn advance_iteration(&mut self) {
        self.iteration += 1;
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub(crate) fn rngs_mut(&mut self) -> &mut [ChaCha8Rng] {
        &mut self.rngs
    }

    /// Index and energy of the lowest-energy particle right now (first on ties).
    pub fn current_best(&self) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (i, &e) in self.energies.iter().enumerate() {
            if e < best.1 {
                best = (i, e);
            }
        }
        best
    }

    /// Recomputes every energy (in parallel) and folds them into the
    /// historical best in particle order. Ties keep the earlier record.
    pub fn refresh_energies(&mut self, objective: &CompositeObjective) -> Result<()> {
        check_dim(objective.dim(), self.dim)?;
        let dim = self.dim;
        let energies: Result<Vec<f64>> = self
            .positions
            .par_chunks(dim)
            .map(|p| objective.energy(p))
            .collect();
        self.energies = energies?;
        for i in 0..self.energies.len() {
            if self.energies[i] < self.best_energy {
                self.best_energy = self.energies[i];
                self.best_position
                    .copy_from_slice(&self.positions[i * dim..(i + 1) * dim]);
            }
        }
        Ok(())
    }

    /// Consensus point of the current ensemble.
    pub fn consensus_point(&self, alpha: f64) -> Result<Vec<f64>> {
        consensus_point(&self.positions, &self.energies, self.dim, alpha)
    }
}

/// `v_α = Σ ω_i V_i / Σ ω_i` with `ω_i = exp(-α (E_i - min_j E_j))`.
///
/// Shifting by the minimum energy keeps the largest weight at exactly 1, so
/// nothing underflows for large `α E`. Non-finite energies get weight 0.
pub fn consensus_point(positions: &[f64], energies: &[f64], dim: usize, alpha: f64) -> Result<Vec<f64>> {
    check_dim(energies.len() * dim, positions.len())?;
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
    }
    let e_min = energies
        .iter()
        .copied()
        .filter(|e| e.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !e_min.is_finite() {
        return Err(Error::EmptyConsensusSupport);
    }
    let mut num = vec![0.0; dim];
    let mut den = 0.0;
    for (i, &e) in energies.iter().enumerate() {
        if !e.is_finite() {
            continue;
        }
        let w = (-alpha * (e - e_min)).exp();
        if w == 0.0 {
            continue;
        }
        den += w;
        for (acc, x) in num.iter_mut().zip(&positions[i * dim..(i + 1) * dim]) {
            *acc += w * x;
        }
    }
    num.iter_mut().for_each(|x| *x /= den);
    Ok(num)
}

/// `max_i ‖V_i - v‖_∞`.
pub fn consensus_spread(positions: &[f64], dim: usize, v: &[f64]) -> f64 {
    positions
        .chunks(dim)
        .map(|p| crate::linalg::dist_inf(p, v))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::SeparableQuadratic;
    use crate::prox::ProxOperator;
    use std::sync::Arc;

    #[test]
    fn identical_particles_give_that_point() {
        let p = [0.3, -1.2];
        let pos: Vec<f64> = p.iter().cycle().take(10).copied().collect();
        let v = consensus_point(&pos, &[1.0, 5.0, 2.0, 7.0, 0.1], 2, 3.0).unwrap();
        assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] + 1.2).abs() < 1e-15);
    }

    #[test]
    fn equal_energies_give_midpoint() {
        let v = consensus_point(&[0.0, 2.0], &[4.0, 4.0], 1, 100.0).unwrap();
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn infinite_energies_have_no_weight() {
        let v = consensus_point(&[0.0, 10.0], &[f64::INFINITY, 3.0], 1, 1.0).unwrap();
        assert_eq!(v, vec![10.0]);
        assert_eq!(
            consensus_point(&[0.0], &[f64::INFINITY], 1, 1.0),
            Err(Error::EmptyConsensusSupport)
        );
    }

    #[test]
    fn huge_alpha_does_not_underflow() {
        let v = consensus_point(&[1.0, 2.0, 3.0], &[800.0, 900.0, 1000.0], 1, 1e6).unwrap();
        assert_eq!(v, vec![1.0]);
    }

    #[test]
    fn zero_alpha_is_plain_mean() {
        let v = consensus_point(&[1.0, 2.0, 6.0], &[1.0, 2.0, 3.0], 1, 0.0).unwrap();
        assert_eq!(v, vec![3.0]);
    }

    #[test]
    fn refresh_tracks_best_and_is_deterministic() {
        let obj = CompositeObjective::new(
            Arc::new(SeparableQuadratic::squared_norm(1)),
            ProxOperator::zero(),
            "q",
        )
        .unwrap();
        let mut ens = ParticleEnsemble::from_rows(&[vec![2.0], vec![-1.0], vec![1.0]], 0).unwrap();
        ens.refresh_energies(&obj).unwrap();
        let first = ens.energies().to_vec();
        ens.refresh_energies(&obj).unwrap();
        assert_eq!(first, ens.energies());
        // -1 and 1 tie; the earlier particle is kept.
        assert_eq!(ens.best_position(), &[-1.0]);
        assert!(ens.best_energy() <= ens.energies().iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn rejects_empty_ensemble() {
        assert!(ParticleEnsemble::new(2, vec![], 0).is_err());
        assert!(ParticleEnsemble::new(2, vec![1.0, 2.0, 3.0], 0).is_err());
    }
}
