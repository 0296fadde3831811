//! JSON configuration for one benchmark run.
//!
//! ```json
//! {
//!   "experiment": { "kind": "lidar", "pulses": 500 },
//!   "methods": ["proxicbo", "cbo", "pg", "apg"],
//!   "particles": [10, 100, 1000],
//!   "trials": 100,
//!   "seed": 0,
//!   "solver": { "alpha": 1e5, "mu": 1e-4, "dt": 0.003, "max_iters": 3000 },
//!   "overrides": { "cbo": { "sigma1": 0.5 } },
//!   "step_metric": [0.01, 3e-6, 1.0],
//!   "reference": { "tol": 1e-10, "max_iters": 100000 },
//!   "paper_scale": { "trials": 500 }
//! }
//! ```
//!
//! Every field is optional. `solver.method`, `solver.n_particles` and
//! `solver.seed` are ignored; the harness sets them per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use proxicbo::sim::{ExperimentSpec, OneBitSparseSpec};
use proxicbo::{Method, SolverConfig};

use crate::error::{BenchError, Result};
use crate::reference::ReferenceSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub experiment: ExperimentSpec,
    pub methods: Vec<Method>,
    pub particles: Vec<usize>,
    /// Number of paired trials `M`.
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub out: PathBuf,
    pub solver: SolverConfig,
    /// Per-method replacements for fields of `solver`.
    pub overrides: BTreeMap<Method, serde_json::Map<String, serde_json::Value>>,
    /// Per-coordinate step scales applied to every method (see
    /// `CompositeObjective::with_step_metric`).
    pub step_metric: Option<Vec<f64>>,
    pub reference: ReferenceSettings,
    /// Fill `wall_ms`; off by default so reruns give identical CSV bytes.
    pub record_timing: bool,
    /// Fraction of diverged runs above which the run exits with code 3.
    pub max_divergence_fraction: f64,
    /// Applied by `--paper-scale`.
    pub paper_scale: Option<PaperScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PaperScale {
    pub trials: Option<usize>,
    pub particles: Option<Vec<usize>>,
    pub experiment: Option<ExperimentSpec>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentSpec::OneBitSparse(OneBitSparseSpec::default()),
            methods: vec![Method::ProxiCbo, Method::Cbo, Method::Pg, Method::Apg],
            particles: vec![10, 100, 1000],
            trials: 100,
            seed: 0,
            threads: 0,
            out: PathBuf::from("results"),
            solver: SolverConfig::default(),
            overrides: BTreeMap::new(),
            step_metric: None,
            reference: ReferenceSettings::default(),
            record_timing: false,
            max_divergence_fraction: 0.25,
            paper_scale: None,
        }
    }
}

/// Committed defaults, one per experiment subcommand.
pub fn builtin(experiment: &str) -> Option<&'static str> {
    Some(match experiment {
        "onebit-sparse" => include_str!("../configs/onebit-sparse.json"),
        "onebit-image" => include_str!("../configs/onebit-image.json"),
        "lidar" => include_str!("../configs/lidar.json"),
        "doppler" => include_str!("../configs/doppler.json"),
        _ => return None,
    })
}

impl BenchConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply_paper_scale(&mut self) {
        if let Some(p) = self.paper_scale.clone() {
            if let Some(t) = p.trials {
                self.trials = t;
            }
            if let Some(n) = p.particles {
                self.particles = n;
            }
            if let Some(e) = p.experiment {
                self.experiment = e;
            }
        }
    }

    /// Solver settings for one method, with its overrides applied.
    pub fn solver_for(&self, method: Method) -> Result<SolverConfig> {
        let mut cfg = match self.overrides.get(&method) {
            None => self.solver.clone(),
            Some(patch) => {
                let mut base = serde_json::to_value(&self.solver)?;
                let obj = base.as_object_mut().expect("solver config is an object");
                for (k, v) in patch {
                    if !obj.contains_key(k) {
                        return Err(BenchError::Config(format!(
                            "unknown solver field `{k}` in overrides for {method}"
                        )));
                    }
                    obj.insert(k.clone(), v.clone());
                }
                serde_json::from_value(base).map_err(|e| BenchError::Config(e.to_string()))?
            }
        };
        cfg.method = method;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.particles.is_empty() || self.particles.contains(&0) {
            return bad("particle counts must be a nonempty list of positive integers".into());
        }
        if !(0.0..=1.0).contains(&self.max_divergence_fraction) {
            return bad("max_divergence_fraction must lie in [0, 1]".into());
        }
        if !(self.reference.tol >= 0.0) {
            return bad("reference.tol must be nonnegative".into());
        }
        self.experiment
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        if let Some(m) = &self.step_metric {
            if m.len() != self.experiment.dim() {
                return bad(format!(
                    "step_metric has {} entries, experiment has dimension {}",
                    m.len(),
                    self.experiment.dim()
                ));
            }
        }
        for &method in &self.methods {
            self.solver_for(method)?
                .validate()
                .map_err(|e| BenchError::Config(format!("{method}: {e}")))?;
        }
        if self.methods.contains(&Method::ProjCbo) && self.experiment.feasible_box().is_none()
            && !matches!(self.experiment, ExperimentSpec::OneBitImage(_))
        {
            return bad("projcbo needs a constrained experiment".into());
        }
        Ok(())
    }
}
