//! Proximal operators and Moreau-envelope gradients for the convex term `g`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::check_dim;
use crate::tv::{tv_box_prox, tv_value, TvProxOutput, TvSettings};

/// Value returned by [`ProxOperator::value`] for points outside the domain of `g`.
///
/// Callers must test with `is_finite()` before doing arithmetic on it; the
/// consensus weights map it to exactly zero.
pub const INFEASIBLE: f64 = f64::INFINITY;

/// Axis-aligned box `lower ≤ x ≤ upper`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for BoxBounds {
    type Error = Error;
    fn try_from(raw: RawBox) -> Result<Self> {
        BoxBounds::new(raw.lower, raw.upper)
    }
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        for (index, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidBounds {
                    index,
                    lower: l,
                    upper: u,
                });
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn project_in_place(&self, v: &mut [f64]) {
        for (x, (l, u)) in v.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *u);
        }
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower.iter().all(|l| *l == f64::NEG_INFINITY)
            && self.upper.iter().all(|u| *u == f64::INFINITY)
    }
}

/// The convex regularizers used by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    Zero,
    L1 {
        weight: f64,
    },
    Box {
        bounds: BoxBounds,
    },
    L1Box {
        weight: f64,
        bounds: BoxBounds,
    },
    /// `weight·TV(x) + ι_[lower,upper]^{h×w}(x)`; infinite bounds give plain TV.
    TvBox {
        weight: f64,
        height: usize,
        width: usize,
        lower: f64,
        upper: f64,
    },
    /// Indicator of a parameter box (used for feasible sets).
    Indicator {
        bounds: BoxBounds,
    },
}

/// A regularizer `g` together with the settings of its inner solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxOperator {
    pub kind: Regularizer,
    #[serde(default)]
    pub tv: TvSettings,
}

#[inline]
pub fn soft_threshold(x: f64, threshold: f64) -> f64 {
    // |x| == threshold maps to 0.
    if x.abs() <= threshold {
        0.0
    } else {
        x - threshold.copysign(x)
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "regularizer weight must be finite and nonnegative, got {weight}"
        )));
    }
    Ok(())
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::NonPositiveStep(mu));
    }
    Ok(())
}

impl ProxOperator {
    pub fn new(kind: Regularizer) -> Result<Self> {
        Self::with_tv_settings(kind, TvSettings::default())
    }

    pub fn with_tv_settings(kind: Regularizer, tv: TvSettings) -> Result<Self> {
        match &kind {
            Regularizer::Zero | Regularizer::Box { .. } | Regularizer::Indicator { .. } => {}
            Regularizer::L1 { weight } | Regularizer::L1Box { weight, .. } => check_weight(*weight)?,
            Regularizer::TvBox {
                weight,
                lower,
                upper,
                ..
            } => {
                check_weight(*weight)?;
                if lower.is_nan() || upper.is_nan() || lower > upper {
                    return Err(Error::InvalidBounds {
                        index: 0,
                        lower: *lower,
                        upper: *upper,
                    });
                }
            }
        }
        Ok(Self { kind, tv })
    }

    pub fn zero() -> Self {
        Self {
            kind: Regularizer::Zero,
            tv: TvSettings::default(),
        }
    }

    pub fn l1(weight: f64) -> Result<Self> {
        Self::new(Regularizer::L1 { weight })
    }

    pub fn boxed(bounds: BoxBounds) -> Self {
        Self {
            kind: Regularizer::Box { bounds },
            tv: TvSettings::default(),
        }
    }

    pub fn indicator(bounds: BoxBounds) -> Self {
        Self {
            kind: Regularizer::Indicator { bounds },
            tv: TvSettings::default(),
        }
    }

    pub fn tv_box(weight: f64, height: usize, width: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(Regularizer::TvBox {
            weight,
            height,
            width,
            lower,
            upper,
        })
    }

    /// Dimension fixed by the operator, if any (`Zero` and `L1` accept any length).
    pub fn dim(&self) -> Option<usize> {
        match &self.kind {
            Regularizer::Zero | Regularizer::L1 { .. } => None,
            Regularizer::Box { bounds }
            | Regularizer::Indicator { bounds }
            | Regularizer::L1Box { bounds, .. } => Some(bounds.dim()),
            Regularizer::TvBox { height, width, .. } => Some(height * width),
        }
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        if let Some(d) = self.dim() {
            check_dim(d, v.len())?;
        }
        Ok(())
    }

    /// `prox_{mu g}(v) = argmin_u { g(u) + ‖v - u‖² / (2 mu) }`.
    pub fn prox(&self, v: &[f64], mu: f64) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        self.prox_in_place(&mut out, mu)?;
        Ok(out)
    }

    pub fn prox_in_place(&self, v: &mut [f64], mu: f64) -> Result<()> {
        check_mu(mu)?;
        self.check_input(v)?;
        match &self.kind {
            Regularizer::Zero => {}
            Regularizer::L1 { weight } => {
                let thr = mu * weight;
                v.iter_mut().for_each(|x| *x = soft_threshold(*x, thr));
            }
            Regularizer::Box { bounds } | Regularizer::Indicator { bounds } => {
                bounds.project_in_place(v)
            }
            Regularizer::L1Box { weight, bounds } => {
                let thr = mu * weight;
                v.iter_mut().for_each(|x| *x = soft_threshold(*x, thr));
                bounds.project_in_place(v);
            }
            Regularizer::TvBox { .. } => {
                let out = self.tv_prox_output(v, mu)?;
                v.copy_from_slice(&out.solution);
            }
        }
        Ok(())
    }

    /// Prox in the metric `diag(1/mus)`: coordinate `i` uses step `mus[i]`.
    ///
    /// Exact for separable kinds. TV only accepts a uniform step.
    pub fn prox_diag_in_place(&self, v: &mut [f64], mus: &[f64]) -> Result<()> {
        check_dim(v.len(), mus.len())?;
        mus.iter().try_for_each(|m| check_mu(*m))?;
        self.check_input(v)?;
        let shrink = |v: &mut [f64], weight: f64| {
            v.iter_mut()
                .zip(mus)
                .for_each(|(x, m)| *x = soft_threshold(*x, m * weight))
        };
        match &self.kind {
            Regularizer::Zero => {}
            Regularizer::L1 { weight } => shrink(v, *weight),
            Regularizer::Box { bounds } | Regularizer::Indicator { bounds } => {
                bounds.project_in_place(v)
            }
            Regularizer::L1Box { weight, bounds } => {
                shrink(v, *weight);
                bounds.project_in_place(v);
            }
            Regularizer::TvBox { .. } => {
                if mus.iter().any(|m| *m != mus[0]) {
                    return Err(Error::InvalidParameter(
                        "TV prox needs a uniform step".into(),
                    ));
                }
                if let Some(&mu) = mus.first() {
                    self.prox_in_place(v, mu)?;
                }
            }
        }
        Ok(())
    }

    /// TV prox together with the inner solver's duality gap.
    ///
    /// Returns an error for non-TV operators.
    pub fn tv_prox_output(&self, v: &[f64], mu: f64) -> Result<TvProxOutput> {
        check_mu(mu)?;
        self.check_input(v)?;
        match &self.kind {
            Regularizer::TvBox {
                weight,
                height,
                width,
                lower,
                upper,
            } => Ok(tv_box_prox(
                v, *height, *width, *weight, *lower, *upper, mu, &self.tv,
            )),
            _ => Err(Error::InvalidParameter(
                "tv_prox_output called on a non-TV operator".into(),
            )),
        }
    }

    /// `∇M_{mu g}(v) = (v - prox_{mu g}(v)) / mu`.
    pub fn moreau_grad(&self, v: &[f64], mu: f64) -> Result<Vec<f64>> {
        let p = self.prox(v, mu)?;
        Ok(v.iter().zip(&p).map(|(a, b)| (a - b) / mu).collect())
    }

    /// `M_{mu g}(v) = g(p) + ‖v - p‖² / (2 mu)` with `p = prox_{mu g}(v)`.
    pub fn moreau_envelope(&self, v: &[f64], mu: f64) -> Result<f64> {
        let p = self.prox(v, mu)?;
        let g = self.value_unchecked(&p);
        if !g.is_finite() {
            // Inexact inner solves can land a hair outside a box.
            return Err(Error::InvalidParameter(
                "prox output left the domain of g".into(),
            ));
        }
        let d: f64 = v.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(g + d / (2.0 * mu))
    }

    /// `g(v)`, or [`INFEASIBLE`] outside the constraint set.
    pub fn value(&self, v: &[f64]) -> Result<f64> {
        self.check_input(v)?;
        Ok(self.value_unchecked(v))
    }

    fn value_unchecked(&self, v: &[f64]) -> f64 {
        match &self.kind {
            Regularizer::Zero => 0.0,
            Regularizer::L1 { weight } => weight * l1_norm(v),
            Regularizer::Box { bounds } | Regularizer::Indicator { bounds } => {
                if bounds.contains(v) {
                    0.0
                } else {
                    INFEASIBLE
                }
            }
            Regularizer::L1Box { weight, bounds } => {
                if bounds.contains(v) {
                    weight * l1_norm(v)
                } else {
                    INFEASIBLE
                }
            }
            Regularizer::TvBox {
                weight,
                height,
                width,
                lower,
                upper,
            } => {
                if v.iter().all(|x| *lower <= *x && *x <= *upper) {
                    weight * tv_value(v, *height, *width, self.tv.variant)
                } else {
                    INFEASIBLE
                }
            }
        }
    }

    /// The hard constraint carried by `g`, if any, as an explicit box.
    pub fn constraint_box(&self) -> Option<BoxBounds> {
        match &self.kind {
            Regularizer::Zero | Regularizer::L1 { .. } => None,
            Regularizer::Box { bounds }
            | Regularizer::Indicator { bounds }
            | Regularizer::L1Box { bounds, .. } => Some(bounds.clone()),
            Regularizer::TvBox {
                height,
                width,
                lower,
                upper,
                ..
            } => {
                if *lower == f64::NEG_INFINITY && *upper == f64::INFINITY {
                    None
                } else {
                    BoxBounds::uniform(height * width, *lower, *upper).ok()
                }
            }
        }
    }

    /// `g` with its indicator part removed.
    pub fn without_constraints(&self) -> ProxOperator {
        let kind = match &self.kind {
            Regularizer::Zero | Regularizer::Box { .. } | Regularizer::Indicator { .. } => {
                Regularizer::Zero
            }
            Regularizer::L1 { weight } | Regularizer::L1Box { weight, .. } => {
                Regularizer::L1 { weight: *weight }
            }
            Regularizer::TvBox {
                weight,
                height,
                width,
                ..
            } => Regularizer::TvBox {
                weight: *weight,
                height: *height,
                width: *width,
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            },
        };
        ProxOperator { kind, tv: self.tv }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self.kind, Regularizer::TvBox { .. })
    }
}

fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_soft_threshold_example() {
        let op = ProxOperator::l1(1.0).unwrap();
        assert_eq!(op.prox(&[2.0, -0.5, 0.0], 1.0).unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn soft_threshold_tie_goes_to_zero() {
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn box_clamps() {
        let op = ProxOperator::boxed(BoxBounds::uniform(2, 0.0, 1.0).unwrap());
        assert_eq!(op.prox(&[1.5, -0.2], 1.0).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn l1box_is_clamped_soft_threshold() {
        let op = ProxOperator::new(Regularizer::L1Box {
            weight: 0.5,
            bounds: BoxBounds::uniform(3, -1.0, 0.8).unwrap(),
        })
        .unwrap();
        assert_eq!(op.prox(&[2.0, -3.0, 0.2], 1.0).unwrap(), vec![0.8, -1.0, 0.0]);
    }

    #[test]
    fn moreau_grad_examples() {
        assert_eq!(ProxOperator::zero().moreau_grad(&[3.0], 0.5).unwrap(), vec![0.0]);
        let l1 = ProxOperator::l1(1.0).unwrap();
        assert_eq!(l1.moreau_grad(&[3.0], 1.0).unwrap(), vec![1.0]);
        assert_eq!(l1.moreau_grad(&[0.4], 1.0).unwrap(), vec![0.4]);
    }

    #[test]
    fn regularizer_values() {
        assert_eq!(ProxOperator::l1(2.0).unwrap().value(&[1.0, -1.0]).unwrap(), 4.0);
        let b = ProxOperator::boxed(BoxBounds::uniform(1, 0.0, 1.0).unwrap());
        assert!(!b.value(&[2.0]).unwrap().is_finite());
        assert_eq!(b.value(&[0.5]).unwrap(), 0.0);
    }

    #[test]
    fn tv_value_matches_direct_difference_sum() {
        let op = ProxOperator::tv_box(1.0, 2, 2, 0.0, 1.0).unwrap();
        let v: [f64; 4] = [0.0, 1.0, 0.0, 1.0];
        // Direct sum over horizontal and vertical neighbour pairs.
        let direct = (v[0] - v[1]).abs()
            + (v[2] - v[3]).abs()
            + (v[0] - v[2]).abs()
            + (v[1] - v[3]).abs();
        assert_eq!(op.value(&v).unwrap(), direct);
    }

    #[test]
    fn errors_are_structured() {
        let b = ProxOperator::boxed(BoxBounds::uniform(2, 0.0, 1.0).unwrap());
        assert_eq!(
            b.prox(&[1.0], 1.0),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
        assert_eq!(b.prox(&[1.0, 1.0], 0.0), Err(Error::NonPositiveStep(0.0)));
        assert!(matches!(
            BoxBounds::new(vec![1.0], vec![0.0]),
            Err(Error::InvalidBounds { .. })
        ));
        assert!(ProxOperator::l1(-1.0).is_err());
    }

    #[test]
    fn constraint_split() {
        let op = ProxOperator::tv_box(0.3, 2, 2, 0.0, 1.0).unwrap();
        assert_eq!(op.constraint_box().unwrap().upper(), &[1.0; 4]);
        let free = op.without_constraints();
        assert!(free.constraint_box().is_none());
        assert!(free.value(&[5.0, 5.0, 5.0, 5.0]).unwrap().is_finite());
    }

    #[test]
    fn bounds_deserialize_with_validation() {
        let ok: BoxBounds = serde_json::from_str(r#"{"lower":[0.0],"upper":[1.0]}"#).unwrap();
        assert_eq!(ok.dim(), 1);
        assert!(serde_json::from_str::<BoxBounds>(r#"{"lower":[2.0],"upper":[1.0]}"#).is_err());
    }
}
