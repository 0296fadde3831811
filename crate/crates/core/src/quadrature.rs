//! Globally adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
    priority: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

fn gk15<F: Fn(f64, &mut [f64])>(f: &F, a: f64, b: f64, n: usize, buf: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; n];
    let mut gauss = vec![0.0; n];
    f(center, buf);
    for j in 0..n {
        kron[j] = WGK[7] * buf[j];
        gauss[j] = WG[3] * buf[j];
    }
    for (idx, (&x, &wk)) in XGK.iter().zip(&WGK).take(7).enumerate() {
        let dx = half * x;
        for t in [center - dx, center + dx] {
            f(t, buf);
            for j in 0..n {
                kron[j] += wk * buf[j];
                if idx % 2 == 1 {
                    gauss[j] += WG[idx / 2] * buf[j];
                }
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|k| k * half).collect();
    let error = kron
        .iter()
        .zip(&gauss)
        .map(|(k, g)| ((k - g) * half).abs())
        .collect();
    (value, error)
}

/// Integrates the `n`-component function `f` over `[breaks[0], breaks.last()]`,
/// starting from the given breakpoints and bisecting the worst segment until
/// every component satisfies `error_j ≤ rel_tol · scale(totals, j)`.
///
/// `scale` lets components that may integrate to zero (off-diagonal terms)
/// be measured against a natural magnitude instead of themselves.
pub fn integrate<F, S>(
    f: F,
    breaks: &[f64],
    n: usize,
    rel_tol: f64,
    scale: S,
    max_segments: usize,
) -> Result<Vec<f64>>
where
    F: Fn(f64, &mut [f64]),
    S: Fn(&[f64], usize) -> f64,
{
    let mut buf = vec![0.0; n];
    let mut heap = BinaryHeap::new();
    let mut total = vec![0.0; n];
    let mut total_err = vec![0.0; n];
    let mut raw = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gk15(&f, w[0], w[1], n, &mut buf);
            for j in 0..n {
                total[j] += value[j];
                total_err[j] += error[j];
            }
            raw.push((w[0], w[1], value, error));
        }
    }
    let norm_scale: Vec<f64> = (0..n)
        .map(|j| scale(&total, j).abs().max(f64::MIN_POSITIVE))
        .collect();
    let priority = |err: &[f64]| {
        err.iter()
            .zip(&norm_scale)
            .map(|(e, s)| e / s)
            .fold(0.0, f64::max)
    };
    for (a, b, value, error) in raw {
        let p = priority(&error);
        heap.push(Segment {
            a,
            b,
            value,
            error,
            priority: p,
        });
    }

    let converged = |total: &[f64], total_err: &[f64]| {
        (0..n).all(|j| total_err[j] <= rel_tol * scale(total, j).abs())
    };
    while !converged(&total, &total_err) {
        if heap.len() >= max_segments {
            let a = breaks.first().copied().unwrap_or(0.0);
            let b = breaks.last().copied().unwrap_or(0.0);
            return Err(Error::Quadrature { a, b });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Cannot subdivide further in floating point.
            return Err(Error::Quadrature {
                a: worst.a,
                b: worst.b,
            });
        }
        for j in 0..n {
            total[j] -= worst.value[j];
            total_err[j] -= worst.error[j];
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = gk15(&f, a, b, n, &mut buf);
            for j in 0..n {
                total[j] += value[j];
                total_err[j] += error[j];
            }
            let p = priority(&error);
            heap.push(Segment {
                a,
                b,
                value,
                error,
                priority: p,
            });
        }
    }
    // Re-sum to shed the drift from repeated add/subtract.
    let mut exact = vec![0.0; n];
    for s in heap.iter() {
        for j in 0..n {
            exact[j] += s.value[j];
        }
    }
    Ok(exact)
}
