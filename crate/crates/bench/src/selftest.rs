//! Quick randomized checks of every proximal operator, run by `prox-selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proxicbo::linalg::dist2;
use proxicbo::{BoxBounds, ProxOperator, Regularizer};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn operators(dim: usize) -> Result<Vec<(&'static str, ProxOperator)>> {
    let bounds = BoxBounds::new(
        (0..dim).map(|i| -1.0 + 0.1 * i as f64).collect(),
        (0..dim).map(|i| 1.0 + 0.2 * i as f64).collect(),
    )?;
    Ok(vec![
        ("zero", ProxOperator::zero()),
        ("l1", ProxOperator::l1(0.7)?),
        ("box", ProxOperator::boxed(bounds.clone())),
        ("indicator", ProxOperator::indicator(bounds.clone())),
        ("l1+box", ProxOperator::new(Regularizer::L1Box { weight: 0.3, bounds })?),
        ("tv+box", ProxOperator::tv_box(0.2, 3, 3, -1.0, 2.0)?),
    ])
}

/// Non-expansiveness on `pairs` random pairs, idempotence of projections and
/// the Moreau-gradient identity against a central difference.
pub fn prox_selftest(seed: u64, pairs: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 9;
    let mut checks = Vec::new();
    for (name, op) in operators(dim)? {
        let mut worst = 0.0f64;
        for _ in 0..pairs {
            let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
            let mu = rng.random_range(0.05..2.0);
            let ratio = dist2(&op.prox(&u, mu)?, &op.prox(&v, mu)?) / dist2(&u, &v);
            worst = worst.max(ratio);
        }
        checks.push(Check {
            name: format!("{name}: non-expansive"),
            pass: worst <= 1.0 + 1e-6,
            detail: format!("max ‖Pu - Pv‖ / ‖u - v‖ = {worst:.9}"),
        });

        if matches!(name, "box" | "indicator") {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
            let once = op.prox(&v, 1.0)?;
            let twice = op.prox(&once, 1.0)?;
            checks.push(Check {
                name: format!("{name}: idempotent"),
                pass: once == twice,
                detail: String::new(),
            });
        }

        if op.is_separable() {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect();
            let mu = 0.6;
            let h = 1e-6;
            let grad = op.moreau_grad(&v, mu)?;
            let mut worst = 0.0f64;
            for i in 0..dim {
                let mut p = v.clone();
                let mut m = v.clone();
                p[i] += h;
                m[i] -= h;
                let fd = (op.moreau_envelope(&p, mu)? - op.moreau_envelope(&m, mu)?) / (2.0 * h);
                worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1e-3));
            }
            checks.push(Check {
                name: format!("{name}: Moreau gradient"),
                pass: worst <= 1e-5,
                detail: format!("max rel. error vs central difference = {worst:.2e}"),
            });
        }
    }
    Ok(checks)
}
