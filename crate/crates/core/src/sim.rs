//! Seeded simulators for one-bit quantized sensing and single-photon lidar,
//! plus the lidar Cramér–Rao bound.
//!
//! Every generator is a pure function of `(spec, seed)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::objective::{LidarModel, OneBitModel};
use crate::prox::BoxBounds;
use crate::quadrature::integrate;
use crate::tv::TvSettings;

/// Derives an independent 64-bit seed for `stream` from `base`.
///
/// SplitMix64 finaliser applied to `base + (stream + 1)·φ`, where φ is the
/// 64-bit golden-ratio constant. Distinct `(base, stream)` pairs give
/// well-separated seeds.
pub fn split_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneBitSparseSpec {
    pub d: usize,
    pub sparsity: usize,
    pub m: usize,
    pub omega: f64,
    /// `λ = lambda_scale · ‖y‖²`.
    pub lambda_scale: f64,
}

impl Default for OneBitSparseSpec {
    fn default() -> Self {
        Self {
            d: 200,
            sparsity: 10,
            m: 800,
            omega: 14.0,
            lambda_scale: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OneBitImageSpec {
    /// Phantom is `side × side`.
    pub side: usize,
    /// `m = m_factor · side²`.
    pub m_factor: usize,
    pub omega: f64,
    /// `λ = lambda_scale · ‖y‖²`.
    pub lambda_scale: f64,
    pub tv: TvSettings,
}

impl Default for OneBitImageSpec {
    fn default() -> Self {
        Self {
            side: 64,
            m_factor: 4,
            omega: 12.0,
            lambda_scale: 4e-4,
            tv: TvSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarSpec {
    /// Number of laser pulses `K`.
    pub pulses: usize,
    pub signal: f64,
    pub background: f64,
    /// Time of flight (ns).
    pub tau: f64,
    /// Target velocity (m/s); used by the Doppler experiment only.
    pub velocity: f64,
    /// Acquisition time (ns).
    pub t_a: f64,
    /// Gaussian pulse standard deviation (ns).
    pub pulse_sigma: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            pulses: 500,
            signal: 0.1,
            background: 1e-4,
            tau: 234.0,
            velocity: 0.0,
            t_a: 5e5,
            pulse_sigma: 0.1,
        }
    }
}

impl LidarSpec {
    /// Moving-target defaults: twice the pulses and acquisition time, 15 m/s.
    pub fn doppler_default() -> Self {
        Self {
            pulses: 1000,
            t_a: 1e6,
            velocity: 15.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    #[serde(rename = "onebit-sparse")]
    OneBitSparse(OneBitSparseSpec),
    #[serde(rename = "onebit-image")]
    OneBitImage(OneBitImageSpec),
    #[serde(rename = "lidar")]
    LidarStatic(LidarSpec),
    #[serde(rename = "doppler")]
    LidarDoppler(LidarSpec),
}

/// A generated trial: measurements plus ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instance {
    OneBit { model: OneBitModel, x_true: Vec<f64> },
    Lidar { model: LidarModel, theta_true: Vec<f64> },
}

impl Instance {
    pub fn truth(&self) -> &[f64] {
        match self {
            Instance::OneBit { x_true, .. } => x_true,
            Instance::Lidar { theta_true, .. } => theta_true,
        }
    }
}

/// Feasible box `[1e-8, 10] × [1e-8, 10] × [0, ∞)` for `(S, b, τ)`.
pub fn lidar_feasible_box(doppler: bool) -> BoxBounds {
    let mut lower = vec![1e-8, 1e-8, 0.0];
    let mut upper = vec![10.0, 10.0, f64::INFINITY];
    if doppler {
        lower.push(-50.0);
        upper.push(50.0);
    }
    BoxBounds::new(lower, upper).expect("static bounds are ordered")
}

impl ExperimentSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentSpec::OneBitSparse(_) => "onebit-sparse",
            ExperimentSpec::OneBitImage(_) => "onebit-image",
            ExperimentSpec::LidarStatic(_) => "lidar",
            ExperimentSpec::LidarDoppler(_) => "doppler",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ExperimentSpec::OneBitSparse(s) => s.d,
            ExperimentSpec::OneBitImage(s) => s.side * s.side,
            ExperimentSpec::LidarStatic(_) => 3,
            ExperimentSpec::LidarDoppler(_) => 4,
        }
    }

    pub fn is_lidar(&self) -> bool {
        matches!(self, ExperimentSpec::LidarStatic(_) | ExperimentSpec::LidarDoppler(_))
    }

    pub fn feasible_box(&self) -> Option<BoxBounds> {
        match self {
            ExperimentSpec::LidarStatic(_) => Some(lidar_feasible_box(false)),
            ExperimentSpec::LidarDoppler(_) => Some(lidar_feasible_box(true)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            ExperimentSpec::OneBitSparse(s) => {
                if s.d == 0 || s.m == 0 || s.sparsity > s.d {
                    return bad(format!("invalid sparse dims d={} s={} m={}", s.d, s.sparsity, s.m));
                }
                if !(s.omega > 0.0) || !(s.lambda_scale >= 0.0) {
                    return bad("omega must be positive and lambda_scale nonnegative".into());
                }
            }
            ExperimentSpec::OneBitImage(s) => {
                if s.side < 2 || s.m_factor == 0 {
                    return bad(format!("invalid image dims side={} m_factor={}", s.side, s.m_factor));
                }
                if !(s.omega > 0.0) || !(s.lambda_scale >= 0.0) {
                    return bad("omega must be positive and lambda_scale nonnegative".into());
                }
            }
            ExperimentSpec::LidarStatic(s) | ExperimentSpec::LidarDoppler(s) => {
                if s.pulses == 0 || !(s.t_a > 0.0) || !(s.pulse_sigma > 0.0) {
                    return bad("lidar needs pulses > 0, t_a > 0, pulse_sigma > 0".into());
                }
                if !(s.signal >= 0.0) || !(s.background >= 0.0) {
                    return bad("lidar rates must be nonnegative".into());
                }
                if s.t_a <= 10.0 * s.pulse_sigma {
                    return bad("t_a must exceed the pulse guard interval".into());
                }
            }
        }
        Ok(())
    }

    /// Ground-truth parameter vector for lidar experiments.
    pub fn lidar_truth(&self) -> Option<Vec<f64>> {
        match self {
            ExperimentSpec::LidarStatic(s) => Some(vec![s.signal, s.background, s.tau]),
            ExperimentSpec::LidarDoppler(s) => Some(vec![s.signal, s.background, s.tau, s.velocity]),
            _ => None,
        }
    }

    /// Generates one trial.
    pub fn generate(&self, seed: u64) -> Result<Instance> {
        self.validate()?;
        match self {
            ExperimentSpec::OneBitSparse(_) | ExperimentSpec::OneBitImage(_) => {
                let (model, x_true) = gen_onebit(self, seed)?;
                Ok(Instance::OneBit { model, x_true })
            }
            ExperimentSpec::LidarStatic(_) | ExperimentSpec::LidarDoppler(_) => {
                let theta_true = self.lidar_truth().expect("lidar spec");
                let model = gen_lidar_events(self, &theta_true, seed)?;
                Ok(Instance::Lidar { model, theta_true })
            }
        }
    }

    /// Initial particles, row-major `n × d`:
    /// sparse: i.i.d. N(0, 1); image: i.i.d. U[0, 1];
    /// lidar: U[0,1] × U[0,1] × U[0,500] (× U[-50,50] for velocity).
    pub fn initial_ensemble(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            match self {
                ExperimentSpec::OneBitSparse(_) => {
                    out.extend((0..d).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); z }))
                }
                ExperimentSpec::OneBitImage(_) => out.extend((0..d).map(|_| rng.random::<f64>())),
                ExperimentSpec::LidarStatic(_) | ExperimentSpec::LidarDoppler(_) => {
                    out.push(rng.random::<f64>());
                    out.push(rng.random::<f64>());
                    out.push(500.0 * rng.random::<f64>());
                    if d == 4 {
                        out.push(rng.random_range(-50.0..50.0));
                    }
                }
            }
        }
        out
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    // sign(0) = +1
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Modified Shepp–Logan phantom on an `n × n` grid, min–max scaled to [0, 1].
pub fn shepp_logan(n: usize) -> Vec<f64> {
    // (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
    const ELLIPSES: [[f64; 6]; 10] = [
        [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
        [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
        [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
        [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
        [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
        [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
        [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
        [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
        [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
        [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
    ];
    let mut img = vec![0.0; n * n];
    for i in 0..n {
        // Row 0 is the top of the image.
        let y = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        for j in 0..n {
            let x = (2.0 * j as f64 + 1.0) / n as f64 - 1.0;
            let mut v = 0.0;
            for [inten, a, b, x0, y0, phi] in ELLIPSES {
                let (s, c) = phi.to_radians().sin_cos();
                let xr = (x - x0) * c + (y - y0) * s;
                let yr = -(x - x0) * s + (y - y0) * c;
                if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
                    v += inten;
                }
            }
            // Overlapping ellipses can cancel to a tiny negative residue.
            img[i * n + j] = if v.abs() < 1e-12 { 0.0 } else { v };
        }
    }
    let lo = img.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        img.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    img
}

/// `y = sign(sin(ω(A x₀ + u)))` with `A_ij ~ N(0, 1/d)` and `u_i ~ U[-Δ/2, Δ/2]`.
///
/// Draw order: signal (sparse case), then `A` row by row, then `u`.
pub fn gen_onebit(spec: &ExperimentSpec, seed: u64) -> Result<(OneBitModel, Vec<f64>)> {
    spec.validate()?;
    let mut rng = rng_from_seed(seed);
    let (x_true, m, omega, lambda_scale) = match spec {
        ExperimentSpec::OneBitSparse(s) => {
            let mut x = vec![0.0; s.d];
            let mut support: Vec<usize> = sample(&mut rng, s.d, s.sparsity).into_vec();
            support.sort_unstable();
            for i in support {
                x[i] = StandardNormal.sample(&mut rng);
            }
            (x, s.m, s.omega, s.lambda_scale)
        }
        ExperimentSpec::OneBitImage(s) => (
            shepp_logan(s.side),
            s.m_factor * s.side * s.side,
            s.omega,
            s.lambda_scale,
        ),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "gen_onebit called for {}",
                spec.label()
            )))
        }
    };
    let d = x_true.len();
    let scale = 1.0 / (d as f64).sqrt();
    let data: Vec<f64> = (0..m * d)
        .map(|_| scale * { let z: f64 = StandardNormal.sample(&mut rng); z })
        .collect();
    let a = Matrix::from_row_major(m, d, data)?;
    let half_bin = PI / (2.0 * omega);
    let u: Vec<f64> = (0..m).map(|_| rng.random_range(-half_bin..=half_bin)).collect();
    let y = onebit_measure(&a, &x_true, &u, omega);
    let reg_weight = lambda_scale * y.iter().map(|v| v * v).sum::<f64>();
    let model = OneBitModel::new(a, y, u, omega, reg_weight)?;
    Ok((model, x_true))
}

/// `sign(sin(ω(A x + u)))` with `sign(0) = +1`.
pub fn onebit_measure(a: &Matrix, x: &[f64], u: &[f64], omega: f64) -> Vec<f64> {
    a.mul_vec(x)
        .iter()
        .zip(u)
        .map(|(ax, ui)| sign((omega * (ax + ui)).sin()))
        .collect()
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite mean");
    p.sample(rng) as u64
}

/// Simulates photon detections for the given parameters.
///
/// Pulse emission times are i.i.d. uniform on `[0, t_a - 10σ]` (sorted).
/// Detections are the superposition of a homogeneous background,
/// `Poisson(b t_a)` points uniform on `[0, t_a]`, and one `Poisson(S)` burst
/// per pulse at `c_k + N(0, σ²)`; points outside `[0, t_a]` are dropped.
pub fn gen_lidar_events(spec: &ExperimentSpec, theta_true: &[f64], seed: u64) -> Result<LidarModel> {
    spec.validate()?;
    let (s, doppler) = match spec {
        ExperimentSpec::LidarStatic(s) => (s, false),
        ExperimentSpec::LidarDoppler(s) => (s, true),
        _ => {
            return Err(Error::InvalidParameter(format!(
                "gen_lidar_events called for {}",
                spec.label()
            )))
        }
    };
    let bounds = lidar_feasible_box(doppler);
    crate::linalg::check_dim(bounds.dim(), theta_true.len())?;
    // S = 0 and b = 0 are allowed here (they just produce no photons).
    if theta_true[0] < 0.0 || theta_true[1] < 0.0 || theta_true[2] < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lidar ground truth {theta_true:?} is infeasible"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let guard = 10.0 * s.pulse_sigma;
    let mut pulses: Vec<f64> = (0..s.pulses)
        .map(|_| rng.random_range(0.0..(s.t_a - guard)))
        .collect();
    pulses.sort_by(f64::total_cmp);

    let (sig, bg) = (theta_true[0], theta_true[1]);
    let mut detections = Vec::new();
    let n_bg = poisson_count(&mut rng, bg * s.t_a);
    for _ in 0..n_bg {
        detections.push(rng.random_range(0.0..=s.t_a));
    }
    // Reuse the model's center map so simulation and likelihood agree.
    let proto = LidarModel::new(pulses.clone(), Vec::new(), s.t_a, s.pulse_sigma, doppler)?;
    let map = proto.center_map(theta_true);
    let jitter = Normal::new(0.0, s.pulse_sigma).expect("positive sigma");
    for &tk in &pulses {
        let count = poisson_count(&mut rng, sig);
        let center = map.offset + map.scale * tk;
        for _ in 0..count {
            let t = center + jitter.sample(&mut rng);
            if (0.0..=s.t_a).contains(&t) {
                detections.push(t);
            }
        }
    }
    detections.sort_by(f64::total_cmp);
    LidarModel::new(pulses, detections, s.t_a, s.pulse_sigma, doppler)
}

/// Fisher information and Cramér–Rao bound for one lidar instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbReport {
    pub fisher: Vec<Vec<f64>>,
    /// `diag(I⁻¹)`
    pub variance: Vec<f64>,
    /// `sqrt(diag(I⁻¹))`, comparable to an RMSE.
    pub std_dev: Vec<f64>,
    pub condition_number: f64,
}

/// Quadrature breakpoints: the window ends plus a ladder around every pulse center.
fn fisher_breakpoints(model: &LidarModel, theta: &[f64], a: f64, b: f64) -> Vec<f64> {
    let map = model.center_map(theta);
    let sigma = model.pulse_sigma();
    const LADDER: [f64; 9] = [-10.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 10.0];
    let mut pts = vec![a, b];
    for &tk in model.pulse_times() {
        let c = map.offset + map.scale * tk;
        for k in LADDER {
            let p = c + k * sigma;
            if p > a && p < b {
                pts.push(p);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Fisher information `I_ij = ∫ ∂_iλ ∂_jλ / λ dt` over `[a, b]` by adaptive
/// Gauss–Kronrod quadrature at relative tolerance `rel_tol`.
pub fn fisher_information(model: &LidarModel, theta: &[f64], a: f64, b: f64, rel_tol: f64) -> Result<Vec<Vec<f64>>> {
    crate::linalg::check_dim(model.num_params(), theta.len())?;
    if !(theta[0] > 0.0 && theta[1] > 0.0) {
        return Err(Error::Domain {
            what: "Fisher information",
            detail: format!("S = {}, b = {} must be positive", theta[0], theta[1]),
        });
    }
    let p = model.num_params();
    let idx = |i: usize, j: usize| i * p + j;
    let breaks = fisher_breakpoints(model, theta, a, b);
    let integrand = |t: f64, out: &mut [f64]| {
        let (lam, jac) = model.intensity_and_jacobian(theta, t);
        for i in 0..p {
            for j in 0..p {
                out[idx(i, j)] = jac[i] * jac[j] / lam;
            }
        }
    };
    let scale = |tot: &[f64], k: usize| {
        let (i, j) = (k / p, k % p);
        (tot[idx(i, i)].abs() * tot[idx(j, j)].abs()).sqrt()
    };
    let flat = integrate(integrand, &breaks, p * p, rel_tol, scale, 2_000_000)?;
    Ok((0..p).map(|i| flat[i * p..(i + 1) * p].to_vec()).collect())
}

/// Per-parameter Cramér–Rao bound for `θ` given the pulse schedule in `model`
/// (detections are not used), integrating over `[0, t_a]` at relative
/// tolerance 1e-8.
pub fn crb(model: &LidarModel, theta: &[f64]) -> Result<CrbReport> {
    let fisher = fisher_information(model, theta, 0.0, model.acquisition_time(), 1e-8)?;
    crb_from_fisher(fisher)
}

pub fn crb_from_fisher(fisher: Vec<Vec<f64>>) -> Result<CrbReport> {
    let p = fisher.len();
    let m = DMatrix::from_fn(p, p, |i, j| fisher[i][j]);
    // Equilibrate before inverting; the raw entries span many decades.
    let d: Vec<f64> = (0..p).map(|i| m[(i, i)]).collect();
    if d.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::SingularFisher);
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| m[(i, j)] / (d[i] * d[j]).sqrt());
    let sv = scaled.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition_number.is_finite() || condition_number > 1e15 {
        return Err(Error::SingularFisher);
    }
    if condition_number > 1e12 {
        log::warn!("Fisher information is ill-conditioned (cond ≈ {condition_number:.3e})");
    }
    let chol = scaled.cholesky().ok_or(Error::SingularFisher)?;
    let inv = chol.inverse();
    let variance: Vec<f64> = (0..p).map(|i| inv[(i, i)] / d[i]).collect();
    if variance.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::SingularFisher);
    }
    let std_dev = variance.iter().map(|v| v.sqrt()).collect();
    Ok(CrbReport {
        fisher,
        variance,
        std_dev,
        condition_number,
    })
}

// ---------------------------------------------------------------------------
// Instance files
//
// Line 1 is a JSON header (`InstanceHeader`). Every following line is
// `column,index,value` with values in shortest round-trip decimal form.
// Matrices are stored row-major with `rows`/`cols` recorded in the header.

pub const INSTANCE_FORMAT: &str = "proxicbo-instance";
pub const INSTANCE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceHeader {
    pub format: String,
    pub version: u32,
    pub spec: ExperimentSpec,
    pub seed: u64,
    pub scalars: BTreeMap<String, f64>,
    pub columns: Vec<ColumnInfo>,
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("instance file: {e}"))
}

pub fn write_instance<W: Write>(mut w: W, spec: &ExperimentSpec, seed: u64, inst: &Instance) -> Result<()> {
    let mut scalars = BTreeMap::new();
    let mut cols: Vec<(&str, &[f64], Option<(usize, usize)>)> = Vec::new();
    match inst {
        Instance::OneBit { model, x_true } => {
            scalars.insert("omega".to_string(), model.omega);
            scalars.insert("reg_weight".to_string(), model.reg_weight);
            cols.push(("A", model.a.data(), Some((model.a.rows(), model.a.cols()))));
            cols.push(("y", &model.y, None));
            cols.push(("u", &model.u, None));
            cols.push(("x_true", x_true, None));
        }
        Instance::Lidar { model, theta_true } => {
            scalars.insert("t_a".to_string(), model.acquisition_time());
            scalars.insert("pulse_sigma".to_string(), model.pulse_sigma());
            scalars.insert("doppler".to_string(), if model.is_doppler() { 1.0 } else { 0.0 });
            scalars.insert("c".to_string(), model.speed_of_light());
            cols.push(("pulse_times", model.pulse_times(), None));
            cols.push(("detections", model.detections(), None));
            cols.push(("theta_true", theta_true, None));
        }
    }
    let header = InstanceHeader {
        format: INSTANCE_FORMAT.into(),
        version: INSTANCE_VERSION,
        spec: spec.clone(),
        seed,
        scalars,
        columns: cols
            .iter()
            .map(|(n, v, shape)| ColumnInfo {
                name: n.to_string(),
                len: v.len(),
                shape: *shape,
            })
            .collect(),
    };
    serde_json::to_writer(&mut w, &header).map_err(io_err)?;
    writeln!(w).map_err(io_err)?;
    for (name, values, _) in cols {
        for (i, v) in values.iter().enumerate() {
            writeln!(w, "{name},{i},{v}").map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn read_instance<R: BufRead>(r: R) -> Result<(InstanceHeader, Instance)> {
    let mut lines = r.lines();
    let first = lines.next().ok_or_else(|| io_err("empty file"))?.map_err(io_err)?;
    let header: InstanceHeader = serde_json::from_str(&first).map_err(io_err)?;
    if header.format != INSTANCE_FORMAT || header.version != INSTANCE_VERSION {
        return Err(io_err(format!("unsupported format {} v{}", header.format, header.version)));
    }
    let mut data: BTreeMap<String, Vec<f64>> = header
        .columns
        .iter()
        .map(|c| (c.name.clone(), vec![f64::NAN; c.len]))
        .collect();
    for line in lines {
        let line = line.map_err(io_err)?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (Some(name), Some(idx), Some(val)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(io_err(format!("malformed line `{line}`")));
        };
        let idx: usize = idx.parse().map_err(io_err)?;
        let val: f64 = val.parse().map_err(io_err)?;
        let col = data.get_mut(name).ok_or_else(|| io_err(format!("unknown column {name}")))?;
        *col.get_mut(idx).ok_or_else(|| io_err(format!("index {idx} out of range for {name}")))? = val;
    }
    let mut take = |name: &str| -> Result<Vec<f64>> {
        let v = data.remove(name).ok_or_else(|| io_err(format!("missing column {name}")))?;
        if v.iter().any(|x| x.is_nan()) {
            return Err(io_err(format!("column {name} is incomplete")));
        }
        Ok(v)
    };
    let scalar = |name: &str| -> Result<f64> {
        header
            .scalars
            .get(name)
            .copied()
            .ok_or_else(|| io_err(format!("missing scalar {name}")))
    };
    let inst = if header.spec.is_lidar() {
        let model = LidarModel::new(
            take("pulse_times")?,
            take("detections")?,
            scalar("t_a")?,
            scalar("pulse_sigma")?,
            scalar("doppler")? != 0.0,
        )?
        .with_speed_of_light(scalar("c")?)?;
        Instance::Lidar {
            model,
            theta_true: take("theta_true")?,
        }
    } else {
        let shape = header
            .columns
            .iter()
            .find(|c| c.name == "A")
            .and_then(|c| c.shape)
            .ok_or_else(|| io_err("matrix A has no shape"))?;
        let a = Matrix::from_row_major(shape.0, shape.1, take("A")?)?;
        let model = OneBitModel::relaxed(a, take("y")?, take("u")?, scalar("omega")?, scalar("reg_weight")?)?;
        Instance::OneBit {
            model,
            x_true: take("x_true")?,
        }
    };
    Ok((header, inst))
}
