//! Slow, independent reference implementations used by the tests.
//!
//! Nothing here shares code with the production paths it checks.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::linalg::Matrix;
use crate::tv::TvVariant;

/// Fourth-order central difference gradient with per-coordinate steps.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], steps: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = steps[i];
            let mut eval = |d: f64| {
                y[i] = x[i] + d;
                let v = f(&y);
                y[i] = x[i];
                v
            };
            let (p1, m1, p2, m2) = (eval(h), eval(-h), eval(2.0 * h), eval(-2.0 * h));
            (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)
        })
        .collect()
}

/// `v_α` computed directly as `Σ e^{-αE_i} V_i / Σ e^{-αE_i}` without any shift.
/// Only meaningful when `α E_i` is small enough not to underflow.
pub fn consensus_direct(positions: &[f64], energies: &[f64], dim: usize, alpha: f64) -> Vec<f64> {
    let mut num = vec![0.0; dim];
    let mut den = 0.0;
    for (p, e) in positions.chunks(dim).zip(energies) {
        let w = (-alpha * e).exp();
        den += w;
        for (n, x) in num.iter_mut().zip(p) {
            *n += w * x;
        }
    }
    num.into_iter().map(|n| n / den).collect()
}

/// Plain gradient descent `x ← x - mu ∇f(x)`, returning every iterate.
pub fn gradient_descent_trajectory<G: Fn(&[f64]) -> Vec<f64>>(grad: G, x0: &[f64], mu: f64, iters: usize) -> Vec<Vec<f64>> {
    let mut out = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    for _ in 0..iters {
        let g = grad(&x);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= mu * gi;
        }
        out.push(x.clone());
    }
    out
}

/// Cyclic coordinate descent for `½‖Ax - b‖² + lam ‖x‖₁`, run until no
/// coordinate moves by more than `tol` in a sweep.
pub fn lasso_coordinate_descent(a: &Matrix, b: &[f64], lam: f64, tol: f64, max_sweeps: usize) -> Vec<f64> {
    let (m, d) = (a.rows(), a.cols());
    let col = |j: usize| (0..m).map(move |i| a.get(i, j));
    let col_sq: Vec<f64> = (0..d).map(|j| col(j).map(|v| v * v).sum()).collect();
    let mut x = vec![0.0; d];
    let mut r: Vec<f64> = b.to_vec();
    for _ in 0..max_sweeps {
        let mut biggest = 0.0f64;
        for j in 0..d {
            if col_sq[j] == 0.0 {
                continue;
            }
            let rho: f64 = col(j).zip(&r).map(|(aij, ri)| aij * ri).sum::<f64>() + col_sq[j] * x[j];
            let new = if rho > lam {
                (rho - lam) / col_sq[j]
            } else if rho < -lam {
                (rho + lam) / col_sq[j]
            } else {
                0.0
            };
            let delta = new - x[j];
            if delta != 0.0 {
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= delta * a.get(i, j);
                }
                x[j] = new;
            }
            biggest = biggest.max(delta.abs());
        }
        if biggest <= tol {
            break;
        }
    }
    x
}

/// Chambolle–Pock primal-dual solver (accelerated for the strongly convex
/// data term) for
/// `min_u ‖u - v‖² / (2 mu) + weight · TV(u)` subject to `lower ≤ u ≤ upper`,
/// on an `h × w` row-major image with forward differences.
#[allow(clippy::too_many_arguments)]
pub fn tv_prox_primal_dual(
    v: &[f64],
    h: usize,
    w: usize,
    weight: f64,
    lower: f64,
    upper: f64,
    mu: f64,
    variant: TvVariant,
    iters: usize,
) -> Vec<f64> {
    let n = h * w;
    let grad = |u: &[f64], gx: &mut [f64], gy: &mut [f64]| {
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                gx[k] = if j + 1 < w { u[k + 1] - u[k] } else { 0.0 };
                gy[k] = if i + 1 < h { u[k + w] - u[k] } else { 0.0 };
            }
        }
    };
    // Negative adjoint of `grad`.
    let div = |px: &[f64], py: &[f64], out: &mut [f64]| {
        for i in 0..h {
            for j in 0..w {
                let k = i * w + j;
                let mut s = 0.0;
                if j + 1 < w {
                    s += px[k];
                }
                if j > 0 {
                    s -= px[k - 1];
                }
                if i + 1 < h {
                    s += py[k];
                }
                if i > 0 {
                    s -= py[k - w];
                }
                out[k] = s;
            }
        }
    };
    let gamma = 1.0 / mu;
    let l = 8f64.sqrt();
    let mut tau = 1.0 / l;
    let mut sigma = 1.0 / (tau * l * l);
    let mut u: Vec<f64> = v.iter().map(|x| x.clamp(lower, upper)).collect();
    let mut ubar = u.clone();
    let (mut px, mut py) = (vec![0.0; n], vec![0.0; n]);
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    let mut d = vec![0.0; n];
    for _ in 0..iters {
        grad(&ubar, &mut gx, &mut gy);
        for k in 0..n {
            px[k] += sigma * gx[k];
            py[k] += sigma * gy[k];
            match variant {
                TvVariant::Anisotropic => {
                    px[k] = px[k].clamp(-weight, weight);
                    py[k] = py[k].clamp(-weight, weight);
                }
                TvVariant::Isotropic => {
                    let norm = (px[k] * px[k] + py[k] * py[k]).sqrt();
                    if norm > weight {
                        px[k] *= weight / norm;
                        py[k] *= weight / norm;
                    }
                }
            }
        }
        div(&px, &py, &mut d);
        let u_old = u.clone();
        for k in 0..n {
            // prox of tau · (‖· - v‖² / (2 mu) + box)
            let x = u[k] + tau * d[k];
            u[k] = ((x + tau / mu * v[k]) / (1.0 + tau / mu)).clamp(lower, upper);
        }
        let theta = 1.0 / (1.0 + 2.0 * gamma * tau).sqrt();
        tau *= theta;
        sigma /= theta;
        for k in 0..n {
            ubar[k] = u[k] + theta * (u[k] - u_old[k]);
        }
    }
    u
}

fn gaussian(a: f64, sigma: f64) -> f64 {
    (-(a * a) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Lidar intensity parameters written out explicitly for the oracles.
#[derive(Debug, Clone)]
pub struct LidarOracle {
    pub pulse_times: Vec<f64>,
    pub t_a: f64,
    pub sigma: f64,
    pub doppler: bool,
    /// m/ns
    pub c: f64,
}

impl LidarOracle {
    /// Pulse centre offset and slope `(o, s)` with `c_k = o + s t_k`.
    fn affine(&self, theta: &[f64]) -> (f64, f64) {
        if self.doppler {
            let v = theta[3] * 1e-9;
            (self.c * theta[2] / (self.c - v), (self.c + v) / (self.c - v))
        } else {
            (theta[2], 1.0)
        }
    }

    /// `S Σ_k h(t - c_k) + b` over every pulse.
    pub fn intensity(&self, theta: &[f64], t: f64) -> f64 {
        let (o, s) = self.affine(theta);
        theta[0]
            * self
                .pulse_times
                .iter()
                .map(|tk| gaussian(t - o - s * tk, self.sigma))
                .sum::<f64>()
            + theta[1]
    }

    /// `(λ(t), ∂λ/∂θ)` over every pulse, with derivatives of the centre map
    /// taken by hand.
    pub fn intensity_and_jacobian(&self, theta: &[f64], t: f64) -> (f64, Vec<f64>) {
        let (o, s) = self.affine(theta);
        let sig2 = self.sigma * self.sigma;
        let mut sum_h = 0.0;
        let mut sum_dh = 0.0;
        let mut sum_dh_t = 0.0;
        for &tk in &self.pulse_times {
            let a = t - o - s * tk;
            let hv = gaussian(a, self.sigma);
            // d/dc h(t - c) = a / σ² h
            let dh = a / sig2 * hv;
            sum_h += hv;
            sum_dh += dh;
            sum_dh_t += dh * tk;
        }
        let lam = theta[0] * sum_h + theta[1];
        let mut jac = vec![sum_h, 1.0];
        if self.doppler {
            let c = self.c;
            let v = theta[3] * 1e-9;
            let do_dtau = c / (c - v);
            let do_dv = c * theta[2] / ((c - v) * (c - v));
            let ds_dv = 2.0 * c / ((c - v) * (c - v));
            jac.push(theta[0] * sum_dh * do_dtau);
            jac.push(theta[0] * (sum_dh * do_dv + sum_dh_t * ds_dv) * 1e-9);
        } else {
            jac.push(theta[0] * sum_dh);
        }
        (lam, jac)
    }

    /// `S K + b t_a - Σ_j log λ(t_j)` with no window truncation.
    pub fn nll(&self, theta: &[f64], detections: &[f64]) -> f64 {
        theta[0] * self.pulse_times.len() as f64 + theta[1] * self.t_a
            - detections
                .iter()
                .map(|t| self.intensity(theta, *t).ln())
                .sum::<f64>()
    }

    /// Fisher information by the midpoint rule on `nodes` uniform cells of `[a, b]`.
    pub fn riemann_fisher(&self, theta: &[f64], a: f64, b: f64, nodes: usize) -> Vec<Vec<f64>> {
        let p = theta.len();
        let dt = (b - a) / nodes as f64;
        let mut acc = vec![vec![0.0; p]; p];
        for k in 0..nodes {
            let t = a + (k as f64 + 0.5) * dt;
            let (lam, jac) = self.intensity_and_jacobian(theta, t);
            for i in 0..p {
                for j in 0..p {
                    acc[i][j] += jac[i] * jac[j] / lam * dt;
                }
            }
        }
        acc
    }

    /// Lewis–Shedler thinning with a piecewise-constant dominating rate:
    /// `b + S·h(0)·(pulses whose ±8σ window covers the cell)` inside pulse
    /// windows, and `b + S·K·h(8σ)` elsewhere.
    pub fn sample_thinning<R: Rng>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        let (o, s) = self.affine(theta);
        let half = 8.0 * self.sigma;
        let peak = gaussian(0.0, self.sigma);
        let tail = gaussian(half, self.sigma) * self.pulse_times.len() as f64;
        let mut edges = vec![0.0, self.t_a];
        let centers: Vec<f64> = self.pulse_times.iter().map(|tk| o + s * tk).collect();
        for c in &centers {
            for e in [c - half, c + half] {
                if e > 0.0 && e < self.t_a {
                    edges.push(e);
                }
            }
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let mut out = Vec::new();
        for cell in edges.windows(2) {
            let (lo, hi) = (cell[0], cell[1]);
            let mid = 0.5 * (lo + hi);
            let covering = centers.iter().filter(|c| (mid - **c).abs() < half).count();
            let bound = theta[1] + theta[0] * (peak * covering as f64 + tail);
            let mean = bound * (hi - lo);
            if mean <= 0.0 {
                continue;
            }
            let count = Poisson::new(mean).expect("positive mean").sample(rng) as u64;
            for _ in 0..count {
                let t = rng.random_range(lo..hi);
                if rng.random::<f64>() * bound < self.intensity(theta, t) {
                    out.push(t);
                }
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }
}

/// Standard normal draws, for tests that need explicit noise vectors.
pub fn normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n).map(|_| dist.sample(rng)).collect()
}
