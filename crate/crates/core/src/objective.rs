//! Smooth data-fidelity terms `f` and the composite objective `E = f + g`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, Matrix};
use crate::prox::{BoxBounds, ProxOperator, INFEASIBLE};

/// A differentiable function `f: R^d → R`.
///
/// Implementations must be immutable after construction; the particle loop
/// evaluates them concurrently.
pub trait SmoothTerm: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(x)?.1)
    }

    /// Closed box on which `f` is defined; `None` means all of `R^d`.
    fn domain(&self) -> Option<&BoxBounds> {
        None
    }

    /// Upper bound on the Lipschitz constant of `∇f`, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

// ---------------------------------------------------------------------------
// Quadratic test functions

/// `f(x) = ½ Σ wᵢ (xᵢ - cᵢ)²`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableQuadratic {
    pub weights: Vec<f64>,
    pub center: Vec<f64>,
}

impl SeparableQuadratic {
    pub fn new(weights: Vec<f64>, center: Vec<f64>) -> Result<Self> {
        check_dim(weights.len(), center.len())?;
        Ok(Self { weights, center })
    }

    /// `‖x‖²`, i.e. weights 2 and center 0.
    pub fn squared_norm(dim: usize) -> Self {
        Self {
            weights: vec![2.0; dim],
            center: vec![0.0; dim],
        }
    }
}

impl SmoothTerm for SeparableQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(0.5
            * x.iter()
                .zip(self.weights.iter().zip(&self.center))
                .map(|(xi, (w, c))| w * (xi - c) * (xi - c))
                .sum::<f64>())
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let v = self.value(x)?;
        let g = x
            .iter()
            .zip(self.weights.iter().zip(&self.center))
            .map(|(xi, (w, c))| w * (xi - c))
            .collect();
        Ok((v, g))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.weights.iter().fold(0.0f64, |m, w| m.max(w.abs())))
    }
}

/// `f(x) = ½ ‖A x - b‖²`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquares {
    pub a: Matrix,
    pub b: Vec<f64>,
    lipschitz: f64,
}

impl LeastSquares {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        check_dim(a.rows(), b.len())?;
        let lipschitz = a.spectral_norm_sq(500);
        Ok(Self { a, b, lipschitz })
    }
}

impl SmoothTerm for LeastSquares {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let r = self.a.mul_vec(x);
        Ok(0.5 * r.iter().zip(&self.b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.dim(), x.len())?;
        let mut r = self.a.mul_vec(x);
        r.iter_mut().zip(&self.b).for_each(|(a, b)| *a -= b);
        let v = 0.5 * r.iter().map(|a| a * a).sum::<f64>();
        Ok((v, self.a.tr_mul_vec(&r)))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

// ---------------------------------------------------------------------------
// One-bit non-monotonic quantization

/// Measurements `y = sign(sin(ω(A x + u)))` with known dither `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneBitModel {
    pub a: Matrix,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub omega: f64,
    pub reg_weight: f64,
}

impl OneBitModel {
    pub fn new(a: Matrix, y: Vec<f64>, u: Vec<f64>, omega: f64, reg_weight: f64) -> Result<Self> {
        if let Some(bad) = y.iter().find(|v| **v != 1.0 && **v != -1.0) {
            return Err(Error::InvalidParameter(format!(
                "one-bit measurements must be ±1, found {bad}"
            )));
        }
        let half_bin = PI / (2.0 * omega);
        if let Some(bad) = u.iter().find(|v| v.abs() > half_bin * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "dither {bad} exceeds half bin width {half_bin}"
            )));
        }
        Self::relaxed(a, y, u, omega, reg_weight)
    }

    /// Like [`OneBitModel::new`] but accepts arbitrary real targets and dither.
    pub fn relaxed(a: Matrix, y: Vec<f64>, u: Vec<f64>, omega: f64, reg_weight: f64) -> Result<Self> {
        check_dim(a.rows(), y.len())?;
        check_dim(a.rows(), u.len())?;
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {omega}")));
        }
        if !(reg_weight >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "regularization weight must be nonnegative, got {reg_weight}"
            )));
        }
        Ok(Self {
            a,
            y,
            u,
            omega,
            reg_weight,
        })
    }

    pub fn measurements(&self) -> usize {
        self.a.rows()
    }

    /// Quantization bin width `Δ = π / ω`.
    pub fn bin_width(&self) -> f64 {
        PI / self.omega
    }

    fn phases(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.a.mul_vec(x);
        z.iter_mut()
            .zip(&self.u)
            .for_each(|(zi, ui)| *zi = self.omega * (*zi + ui));
        z
    }

    /// `D(x) = ½ ‖y - sin(ω(Ax + u))‖²`
    pub fn cost(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.a.cols(), x.len())?;
        let z = self.phases(x);
        Ok(0.5
            * z.iter()
                .zip(&self.y)
                .map(|(zi, yi)| {
                    let r = yi - zi.sin();
                    r * r
                })
                .sum::<f64>())
    }

    /// `∇D(x) = ω Aᵀ[(sin z - y) ⊙ cos z]`, `z = ω(Ax + u)`
    pub fn cost_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_dim(self.a.cols(), x.len())?;
        let mut z = self.phases(x);
        let mut cost = 0.0;
        for (zi, yi) in z.iter_mut().zip(&self.y) {
            let (s, c) = zi.sin_cos();
            let r = s - yi;
            cost += r * r;
            *zi = self.omega * r * c;
        }
        Ok((0.5 * cost, self.a.tr_mul_vec(&z)))
    }
}

impl SmoothTerm for OneBitModel {
    fn dim(&self) -> usize {
        self.a.cols()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.cost(x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.cost_and_grad(x)
    }

    fn lipschitz(&self) -> Option<f64> {
        // |d²/dz² ½(y - sin z)²| ≤ 2 for |y| ≤ 1.
        Some(2.0 * self.omega * self.omega * self.a.spectral_norm_sq(200))
    }
}

// ---------------------------------------------------------------------------
// Single-photon lidar

/// Speed of light in metres per nanosecond.
pub const SPEED_OF_LIGHT_M_PER_NS: f64 = 0.299_792_458;

/// Pulses farther than this many pulse widths from a detection are skipped.
pub const PULSE_WINDOW_SIGMAS: f64 = 8.0;

const LIDAR_DOMAIN_FLOOR: f64 = 1e-12;

/// Photon detections from a time-inhomogeneous Poisson process with
/// intensity `λ(t) = S Σ_k h(t - c_k(θ)) + b`.
///
/// Parameters are `θ = (S, b, τ)` for a static target and `(S, b, τ, v)`
/// for a moving one. Times are in ns, `v` is in m/s. For the moving target
/// the pulse centers are `c_k = cτ/(c-v) + t_k (c+v)/(c-v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLidar", into = "RawLidar")]
pub struct LidarModel {
    pulse_times: Vec<f64>,
    detections: Vec<f64>,
    t_a: f64,
    pulse_sigma: f64,
    doppler: bool,
    c: f64,
    #[serde(skip)]
    domain: BoxBounds,
}

#[derive(Serialize, Deserialize)]
struct RawLidar {
    pulse_times: Vec<f64>,
    detections: Vec<f64>,
    t_a: f64,
    pulse_sigma: f64,
    doppler: bool,
    c: f64,
}

impl TryFrom<RawLidar> for LidarModel {
    type Error = Error;
    fn try_from(r: RawLidar) -> Result<Self> {
        let mut m = LidarModel::new(r.pulse_times, r.detections, r.t_a, r.pulse_sigma, r.doppler)?;
        m.c = r.c;
        Ok(m)
    }
}

impl From<LidarModel> for RawLidar {
    fn from(m: LidarModel) -> Self {
        RawLidar {
            pulse_times: m.pulse_times,
            detections: m.detections,
            t_a: m.t_a,
            pulse_sigma: m.pulse_sigma,
            doppler: m.doppler,
            c: m.c,
        }
    }
}

/// Per-detection pulse sums needed by the likelihood and its gradient.
#[derive(Debug, Default, Clone, Copy)]
struct PulseSums {
    /// `Σ h(a_k)`
    h: f64,
    /// `Σ h'(a_k)`
    dh: f64,
    /// `Σ h'(a_k) t_k` (Doppler velocity derivative)
    dh_t: f64,
}

impl LidarModel {
    pub fn new(
        pulse_times: Vec<f64>,
        detections: Vec<f64>,
        t_a: f64,
        pulse_sigma: f64,
        doppler: bool,
    ) -> Result<Self> {
        if !(pulse_sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "pulse_sigma must be positive, got {pulse_sigma}"
            )));
        }
        if !(t_a > 0.0) {
            return Err(Error::InvalidParameter(format!("t_a must be positive, got {t_a}")));
        }
        if pulse_times.iter().chain(&detections).any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("pulse and detection times must be finite".into()));
        }
        if let Some(t) = detections.iter().find(|t| !(**t >= 0.0 && **t <= t_a)) {
            return Err(Error::InvalidParameter(format!(
                "detection {t} outside [0, {t_a}]"
            )));
        }
        // Both sums are order-independent; sorting enables the windowed pulse search.
        let mut pulse_times = pulse_times;
        let mut detections = detections;
        pulse_times.sort_by(f64::total_cmp);
        detections.sort_by(f64::total_cmp);
        let dim = if doppler { 4 } else { 3 };
        let mut lower = vec![f64::NEG_INFINITY; dim];
        lower[0] = LIDAR_DOMAIN_FLOOR;
        lower[1] = LIDAR_DOMAIN_FLOOR;
        let domain = BoxBounds::new(lower, vec![f64::INFINITY; dim])?;
        Ok(Self {
            pulse_times,
            detections,
            t_a,
            pulse_sigma,
            doppler,
            c: SPEED_OF_LIGHT_M_PER_NS,
            domain,
        })
    }

    pub fn pulse_times(&self) -> &[f64] {
        &self.pulse_times
    }

    pub fn detections(&self) -> &[f64] {
        &self.detections
    }

    pub fn acquisition_time(&self) -> f64 {
        self.t_a
    }

    pub fn pulse_sigma(&self) -> f64 {
        self.pulse_sigma
    }

    pub fn is_doppler(&self) -> bool {
        self.doppler
    }

    pub fn speed_of_light(&self) -> f64 {
        self.c
    }

    /// Overrides the propagation speed (m/ns).
    pub fn with_speed_of_light(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("speed of light must be positive, got {c}")));
        }
        self.c = c;
        Ok(self)
    }

    pub fn num_params(&self) -> usize {
        if self.doppler {
            4
        } else {
            3
        }
    }

    /// Gaussian pulse density with standard deviation `pulse_sigma`.
    #[inline]
    pub fn pulse(&self, a: f64) -> f64 {
        let s = self.pulse_sigma;
        (-0.5 * (a / s) * (a / s)).exp() / (s * (2.0 * PI).sqrt())
    }

    /// `h'(a) = -a / σ² · h(a)`
    #[inline]
    pub fn pulse_derivative(&self, a: f64) -> f64 {
        -a / (self.pulse_sigma * self.pulse_sigma) * self.pulse(a)
    }

    /// `(offset, scale)` with `c_k = offset + scale · t_k`, plus the
    /// derivatives of offset and scale with respect to `v` in m/ns.
    pub(crate) fn center_map(&self, theta: &[f64]) -> CenterMap {
        let tau = theta[2];
        if self.doppler {
            let v = theta[3] * 1e-9;
            let c = self.c;
            let den = c - v;
            CenterMap {
                offset: c * tau / den,
                scale: (c + v) / den,
                d_offset_d_tau: c / den,
                d_offset_d_v: c * tau / (den * den),
                d_scale_d_v: 2.0 * c / (den * den),
            }
        } else {
            CenterMap {
                offset: tau,
                scale: 1.0,
                d_offset_d_tau: 1.0,
                d_offset_d_v: 0.0,
                d_scale_d_v: 0.0,
            }
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim(self.num_params(), theta.len())?;
        let (s, b) = (theta[0], theta[1]);
        if !(s > 0.0) || !(b > 0.0) {
            return Err(Error::Domain {
                what: "lidar likelihood",
                detail: format!("S = {s}, b = {b} (both must be positive)"),
            });
        }
        if self.doppler && !(theta[3].abs() * 1e-9 < self.c) {
            return Err(Error::Domain {
                what: "lidar likelihood",
                detail: format!("velocity {} m/s is not below c", theta[3]),
            });
        }
        Ok(())
    }

    /// Index range of pulses whose center is within the truncation window of `t`.
    #[inline]
    fn window(&self, map: &CenterMap, t: f64) -> std::ops::Range<usize> {
        let half = PULSE_WINDOW_SIGMAS * self.pulse_sigma;
        let lo = (t - half - map.offset) / map.scale;
        let hi = (t + half - map.offset) / map.scale;
        let start = self.pulse_times.partition_point(|tk| *tk < lo);
        let end = self.pulse_times.partition_point(|tk| *tk <= hi);
        start..end.max(start)
    }

    #[inline]
    fn pulse_sums(&self, map: &CenterMap, t: f64, range: std::ops::Range<usize>) -> PulseSums {
        let mut sums = PulseSums::default();
        for &tk in &self.pulse_times[range] {
            let a = t - map.offset - map.scale * tk;
            let h = self.pulse(a);
            let dh = -a / (self.pulse_sigma * self.pulse_sigma) * h;
            sums.h += h;
            sums.dh += dh;
            sums.dh_t += dh * tk;
        }
        sums
    }

    /// Intensity `λ(t)` (truncated pulse sum).
    pub fn intensity(&self, theta: &[f64], t: f64) -> Result<f64> {
        check_dim(self.num_params(), theta.len())?;
        let map = self.center_map(theta);
        let sums = self.pulse_sums(&map, t, self.window(&map, t));
        Ok(theta[0] * sums.h + theta[1])
    }

    /// Intensity and its partial derivatives with respect to θ, summing all
    /// pulses within the truncation window.
    pub fn intensity_and_jacobian(&self, theta: &[f64], t: f64) -> (f64, Vec<f64>) {
        let map = self.center_map(theta);
        let sums = self.pulse_sums(&map, t, self.window(&map, t));
        let s = theta[0];
        let mut jac = vec![sums.h, 1.0, -s * sums.dh * map.d_offset_d_tau];
        if self.doppler {
            let dc = -s * (sums.dh * map.d_offset_d_v + sums.dh_t * map.d_scale_d_v);
            jac.push(dc * 1e-9);
        }
        (s * sums.h + theta[1], jac)
    }

    /// Negative log-likelihood `S K + b t_a - Σ_t log λ(t)`.
    pub fn nll(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        let (s, b) = (theta[0], theta[1]);
        let map = self.center_map(theta);
        let mut log_sum = 0.0;
        for &t in &self.detections {
            let sums = self.pulse_sums(&map, t, self.window(&map, t));
            log_sum += (s * sums.h + b).ln();
        }
        Ok(s * self.pulse_times.len() as f64 + b * self.t_a - log_sum)
    }

    pub fn nll_and_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_theta(theta)?;
        let (s, b) = (theta[0], theta[1]);
        let map = self.center_map(theta);
        let k = self.pulse_times.len() as f64;
        let mut log_sum = 0.0;
        let mut grad = vec![0.0; self.num_params()];
        grad[0] = k;
        grad[1] = self.t_a;
        for &t in &self.detections {
            let sums = self.pulse_sums(&map, t, self.window(&map, t));
            let lam = s * sums.h + b;
            log_sum += lam.ln();
            let inv = 1.0 / lam;
            grad[0] -= sums.h * inv;
            grad[1] -= inv;
            grad[2] += s * inv * sums.dh * map.d_offset_d_tau;
            if self.doppler {
                grad[3] += s * inv * (sums.dh * map.d_offset_d_v + sums.dh_t * map.d_scale_d_v);
            }
        }
        if self.doppler {
            grad[3] *= 1e-9;
        }
        Ok((s * k + b * self.t_a - log_sum, grad))
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CenterMap {
    pub offset: f64,
    pub scale: f64,
    pub d_offset_d_tau: f64,
    pub d_offset_d_v: f64,
    pub d_scale_d_v: f64,
}

impl SmoothTerm for LidarModel {
    fn dim(&self) -> usize {
        self.num_params()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.nll(x)
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.nll_and_grad(x)
    }

    fn domain(&self) -> Option<&BoxBounds> {
        Some(&self.domain)
    }
}

// ---------------------------------------------------------------------------
// Composite objective

/// `E(v) = f(v) + g(v)` with a smooth oracle for `f` and a prox oracle for `g`.
#[derive(Clone)]
pub struct CompositeObjective {
    smooth: Arc<dyn SmoothTerm>,
    regularizer: ProxOperator,
    label: String,
    step_metric: Option<Vec<f64>>,
}

impl fmt::Debug for CompositeObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CompositeObjective")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("regularizer", &self.regularizer.kind)
            .finish()
    }
}

impl CompositeObjective {
    pub fn new(
        smooth: Arc<dyn SmoothTerm>,
        regularizer: ProxOperator,
        label: impl Into<String>,
    ) -> Result<Self> {
        if let Some(d) = regularizer.dim() {
            check_dim(smooth.dim(), d)?;
        }
        if let Some(dom) = smooth.domain() {
            check_dim(smooth.dim(), dom.dim())?;
        }
        Ok(Self {
            smooth,
            regularizer,
            label: label.into(),
            step_metric: None,
        })
    }

    /// Uses per-coordinate steps `mu · scales[i]` in the forward-backward map.
    ///
    /// Only allowed for separable `g`, where the scaled prox is exact.
    pub fn with_step_metric(mut self, scales: Vec<f64>) -> Result<Self> {
        check_dim(self.dim(), scales.len())?;
        if let Some(s) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!("step scales must be positive, got {s}")));
        }
        if !self.regularizer.is_separable() && scales.iter().any(|s| *s != scales[0]) {
            return Err(Error::InvalidParameter(
                "per-coordinate steps need a separable regularizer".into(),
            ));
        }
        self.step_metric = Some(scales);
        Ok(self)
    }

    pub fn step_metric(&self) -> Option<&[f64]> {
        self.step_metric.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smooth(&self) -> &dyn SmoothTerm {
        self.smooth.as_ref()
    }

    pub fn regularizer(&self) -> &ProxOperator {
        &self.regularizer
    }

    /// Same `f`, different `g`.
    pub fn with_regularizer(&self, regularizer: ProxOperator, label: impl Into<String>) -> Result<Self> {
        let out = Self::new(Arc::clone(&self.smooth), regularizer, label)?;
        match &self.step_metric {
            Some(m) => out.with_step_metric(m.clone()),
            None => Ok(out),
        }
    }

    pub fn f_value(&self, x: &[f64]) -> Result<f64> {
        self.smooth.value(x)
    }

    pub fn f_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.smooth.gradient(x)
    }

    /// `E(x)`, or [`INFEASIBLE`] when `x` lies outside the domain of `f` or `g`.
    pub fn energy(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let g = self.regularizer.value(x)?;
        if !g.is_finite() {
            return Ok(INFEASIBLE);
        }
        match self.smooth.value(x) {
            Ok(f) if f.is_finite() => Ok(f + g),
            Ok(_) | Err(Error::Domain { .. }) => Ok(INFEASIBLE),
            Err(e) => Err(e),
        }
    }

    /// Point at which `∇f` is evaluated for `x`: `x` itself, or its projection
    /// onto the domain of `f` when `x` lies outside it.
    fn gradient_anchor<'a>(&self, x: &'a [f64]) -> std::borrow::Cow<'a, [f64]> {
        match self.smooth.domain() {
            Some(dom) if !dom.contains(x) => std::borrow::Cow::Owned(dom.project(x)),
            _ => std::borrow::Cow::Borrowed(x),
        }
    }

    /// Forward-backward map `prox_{mu g}(w - mu ∇f(w))`, `w` = gradient anchor of `x`.
    ///
    /// With a step metric `s`, coordinate `i` uses step `mu · s_i` in both halves.
    pub fn forward_backward(&self, x: &[f64], mu: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let w = self.gradient_anchor(x);
        let grad = self.smooth.gradient(&w)?;
        match &self.step_metric {
            None => {
                let mut out: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - mu * gi).collect();
                self.regularizer.prox_in_place(&mut out, mu)?;
                Ok(out)
            }
            Some(scales) => {
                let steps: Vec<f64> = scales.iter().map(|s| mu * s).collect();
                let mut out: Vec<f64> = w
                    .iter()
                    .zip(&grad)
                    .zip(&steps)
                    .map(|((wi, gi), m)| wi - m * gi)
                    .collect();
                self.regularizer.prox_diag_in_place(&mut out, &steps)?;
                Ok(out)
            }
        }
    }

    /// `(x - prox_{mu g}(x - mu ∇f(x))) / mu`, which equals
    /// `∇f(x) + ∇M_{mu g}(x - mu ∇f(x))`; zero exactly at stationary points.
    pub fn prox_gradient_residual(&self, x: &[f64], mu: f64) -> Result<Vec<f64>> {
        let fb = self.forward_backward(x, mu)?;
        Ok(x.iter().zip(&fb).map(|(a, b)| (a - b) / mu).collect())
    }
}

/// Builds the composite objective for a generated experiment instance.
pub fn make_objective(
    spec: &crate::sim::ExperimentSpec,
    instance: &crate::sim::Instance,
) -> Result<CompositeObjective> {
    use crate::sim::{ExperimentSpec, Instance};
    match (spec, instance) {
        (ExperimentSpec::OneBitSparse(_), Instance::OneBit { model, .. }) => {
            let g = ProxOperator::l1(model.reg_weight)?;
            CompositeObjective::new(Arc::new(model.clone()), g, spec.label())
        }
        (ExperimentSpec::OneBitImage(s), Instance::OneBit { model, .. }) => {
            check_dim(s.side * s.side, model.a.cols())?;
            let mut g = ProxOperator::tv_box(model.reg_weight, s.side, s.side, 0.0, 1.0)?;
            g.tv = s.tv;
            CompositeObjective::new(Arc::new(model.clone()), g, spec.label())
        }
        (ExperimentSpec::LidarStatic(_) | ExperimentSpec::LidarDoppler(_), Instance::Lidar { model, .. }) => {
            let bounds = spec.feasible_box().ok_or_else(|| {
                Error::InvalidParameter("lidar experiment without feasible set".into())
            })?;
            if bounds.dim() != model.num_params() {
                return Err(Error::InvalidParameter(
                    "lidar model and experiment disagree on Doppler".into(),
                ));
            }
            CompositeObjective::new(Arc::new(model.clone()), ProxOperator::indicator(bounds), spec.label())
        }
        _ => Err(Error::InvalidParameter(format!(
            "instance does not match experiment {}",
            spec.label()
        ))),
    }
}
