//! Paired-seed benchmark runs.
//!
//! Seeds for trial `t` derive from `split_seed(config.seed, t)`: stream 0
//! generates the instance, stream 1 (then `N`) the initial ensemble and
//! stream 2 the solver noise. Every method sees the same instance and, for a
//! given particle count, the same initial ensemble.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use proxicbo::objective::make_objective;
use proxicbo::sim::{crb, split_seed, Instance};
use proxicbo::{solve, CompositeObjective, Method};

use crate::config::BenchConfig;
use crate::error::{BenchError, Result};
use crate::reference::{reference_minimizer, ReferenceResult};

pub const TRIAL_HEADER: &str =
    "experiment,method,n_particles,trial,seed,success,obj,obj_ref,metric_name,metric_value,wall_ms";

const LIDAR_PARAMS: [&str; 4] = ["S", "b", "tau", "v"];

/// One CSV row. Lidar runs produce one row per parameter (signed error);
/// one-bit runs one row with the reconstruction SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub experiment: String,
    pub method: String,
    pub n_particles: usize,
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub obj: f64,
    pub obj_ref: f64,
    pub metric_name: String,
    pub metric_value: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub n_particles: usize,
    /// Trials counted in `success_rate`.
    pub trials: usize,
    /// Trials dropped because the reference PG did not converge.
    pub excluded: usize,
    pub diverged: usize,
    pub success_rate: f64,
    pub metric_name: String,
    pub metric_value: f64,
    /// `sqrt` of the trial-averaged Cramér–Rao variance (lidar only).
    pub crb_std: Option<f64>,
}

/// Result of one method on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub method: Method,
    pub n_particles: usize,
    /// `None` when the run diverged.
    pub estimate: Option<Vec<f64>>,
    pub obj: f64,
    pub success: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub trial: usize,
    pub seed: u64,
    pub truth: Vec<f64>,
    pub reference: ReferenceResult,
    /// Per-parameter CRB variance for lidar trials.
    pub crb_variance: Option<Vec<f64>>,
    pub runs: Vec<RunOutcome>,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub experiment: String,
    pub trials: Vec<TrialData>,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl BenchReport {
    pub fn total_runs(&self) -> usize {
        self.trials.iter().map(|t| t.runs.len()).sum()
    }

    pub fn diverged_runs(&self) -> usize {
        self.trials
            .iter()
            .flat_map(|t| &t.runs)
            .filter(|r| r.estimate.is_none())
            .count()
    }

    pub fn summary_for(&self, method: Method, n: usize) -> impl Iterator<Item = &SummaryRow> {
        self.summary
            .iter()
            .filter(move |r| r.method == method.name() && r.n_particles == n)
    }

    pub fn success_rate(&self, method: Method, n: usize) -> Option<f64> {
        self.summary_for(method, n).next().map(|r| r.success_rate)
    }

    /// Writes `<experiment>_trials.csv` and `<experiment>_summary.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let trials = dir.join(format!("{}_trials.csv", self.experiment));
        let summary = dir.join(format!("{}_summary.csv", self.experiment));
        write_records(std::fs::File::create(&trials)?, &self.records)?;
        let mut w = csv::Writer::from_writer(std::fs::File::create(&summary)?);
        for row in &self.summary {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok((trials, summary))
    }
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRIAL_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != TRIAL_HEADER {
        return Err(BenchError::Config(format!("unexpected trial CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(BenchError::from)).collect()
}

/// `(E(v̂) - E(v*)) / |E(v*)| < 1e-3`
pub fn is_success(obj: f64, obj_ref: f64) -> bool {
    obj.is_finite() && (obj - obj_ref) / obj_ref.abs() < 1e-3
}

/// `10 log10(‖x₀‖² / ‖x̂ - x₀‖²)`
pub fn snr_db(truth: &[f64], estimate: &[f64]) -> f64 {
    let signal: f64 = truth.iter().map(|v| v * v).sum();
    let err: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    10.0 * (signal / err).log10()
}

fn fingerprint(init: &[f64], instance_energy: f64) -> u64 {
    let mut h = DefaultHasher::new();
    init.iter().for_each(|v| v.to_bits().hash(&mut h));
    instance_energy.to_bits().hash(&mut h);
    h.finish()
}

fn build_objective(config: &BenchConfig, instance: &Instance) -> Result<CompositeObjective> {
    let obj = make_objective(&config.experiment, instance)?;
    Ok(match &config.step_metric {
        Some(m) => obj.with_step_metric(m.clone())?,
        None => obj,
    })
}

fn run_trial(config: &BenchConfig, trial: usize) -> Result<TrialData> {
    let seed = split_seed(config.seed, trial as u64);
    let instance = config.experiment.generate(split_seed(seed, 0))?;
    let objective = build_objective(config, &instance)?;
    let truth = instance.truth().to_vec();
    let reference = reference_minimizer(&objective, &truth, config.solver.mu, &config.reference)?;
    let crb_variance = match &instance {
        Instance::Lidar { model, theta_true } => match crb(model, theta_true) {
            Ok(r) => Some(r.variance),
            Err(e) => {
                log::warn!("trial {trial}: no CRB ({e})");
                None
            }
        },
        Instance::OneBit { .. } => None,
    };
    let truth_energy = objective.energy(&truth)?;
    let init_stream = split_seed(seed, 1);
    let solver_seed = split_seed(seed, 2);

    let mut runs = Vec::with_capacity(config.particles.len() * config.methods.len());
    for &n in &config.particles {
        let init = config.experiment.initial_ensemble(n, split_seed(init_stream, n as u64));
        let shared = fingerprint(&init, truth_energy);
        log::debug!("trial {trial} N={n}: shared inputs {shared:016x}");
        for &method in &config.methods {
            assert_eq!(
                fingerprint(&init, objective.energy(&truth)?),
                shared,
                "paired inputs changed between methods"
            );
            let mut solver = config.solver_for(method)?;
            solver.n_particles = n;
            solver.seed = solver_seed;
            let start = Instant::now();
            let result = solve(&objective, &init, &solver);
            let wall_ms = if config.record_timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            };
            runs.push(match result {
                Ok(r) => RunOutcome {
                    method,
                    n_particles: n,
                    success: is_success(r.objective_value, reference.energy),
                    obj: r.objective_value,
                    estimate: Some(r.estimate),
                    wall_ms,
                },
                Err(e) => {
                    log::warn!("trial {trial} {method} N={n}: {e}");
                    RunOutcome {
                        method,
                        n_particles: n,
                        estimate: None,
                        obj: f64::NAN,
                        success: false,
                        wall_ms,
                    }
                }
            });
        }
    }
    Ok(TrialData {
        trial,
        seed,
        truth,
        reference,
        crb_variance,
        runs,
    })
}

fn records_for(experiment: &str, lidar: bool, t: &TrialData) -> Vec<TrialRecord> {
    let mut out = Vec::new();
    for run in &t.runs {
        let row = |name: String, value: f64| TrialRecord {
            experiment: experiment.to_owned(),
            method: run.method.name().to_owned(),
            n_particles: run.n_particles,
            trial: t.trial,
            seed: t.seed,
            success: run.success,
            obj: run.obj,
            obj_ref: t.reference.energy,
            metric_name: name,
            metric_value: value,
            wall_ms: run.wall_ms,
        };
        if lidar {
            for (k, truth) in t.truth.iter().enumerate() {
                let err = run.estimate.as_ref().map_or(f64::NAN, |e| e[k] - truth);
                out.push(row(format!("err_{}", LIDAR_PARAMS[k]), err));
            }
        } else {
            let snr = run.estimate.as_ref().map_or(f64::NAN, |e| snr_db(&t.truth, e));
            out.push(row("snr_db".into(), snr));
        }
    }
    out
}

fn summarize(config: &BenchConfig, experiment: &str, trials: &[TrialData]) -> Vec<SummaryRow> {
    let lidar = config.experiment.is_lidar();
    let dim = config.experiment.dim();
    let mut rows = Vec::new();
    for &n in &config.particles {
        for &method in &config.methods {
            let runs: Vec<(&TrialData, &RunOutcome)> = trials
                .iter()
                .flat_map(|t| t.runs.iter().map(move |r| (t, r)))
                .filter(|(_, r)| r.method == method && r.n_particles == n)
                .collect();
            let counted: Vec<_> = runs.iter().filter(|(t, _)| t.reference.converged).collect();
            let excluded = runs.len() - counted.len();
            let diverged = runs.iter().filter(|(_, r)| r.estimate.is_none()).count();
            let success_rate = if counted.is_empty() {
                f64::NAN
            } else {
                counted.iter().filter(|(_, r)| r.success).count() as f64 / counted.len() as f64
            };
            let finished: Vec<_> = runs
                .iter()
                .filter_map(|(t, r)| r.estimate.as_ref().map(|e| (*t, e)))
                .collect();
            let base = |name: String, value: f64, crb_std: Option<f64>| SummaryRow {
                experiment: experiment.to_owned(),
                method: method.name().to_owned(),
                n_particles: n,
                trials: counted.len(),
                excluded,
                diverged,
                success_rate,
                metric_name: name,
                metric_value: value,
                crb_std,
            };
            if lidar {
                let crbs: Vec<&Vec<f64>> = trials.iter().filter_map(|t| t.crb_variance.as_ref()).collect();
                for k in 0..dim {
                    let mse = finished.iter().map(|(t, e)| (e[k] - t.truth[k]).powi(2)).sum::<f64>()
                        / finished.len() as f64;
                    let crb_std = (!crbs.is_empty())
                        .then(|| (crbs.iter().map(|v| v[k]).sum::<f64>() / crbs.len() as f64).sqrt());
                    rows.push(base(format!("rmse_{}", LIDAR_PARAMS[k]), mse.sqrt(), crb_std));
                }
            } else {
                let mean = finished.iter().map(|(t, e)| snr_db(&t.truth, e)).sum::<f64>()
                    / finished.len() as f64;
                rows.push(base("mean_snr_db".into(), mean, None));
            }
        }
    }
    rows
}

/// Runs every (method, N) pair on `config.trials` paired trials.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    let trials: Vec<TrialData> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, t))
            .collect::<Result<Vec<_>>>()
    })?;
    let excluded = trials.iter().filter(|t| !t.reference.converged).count();
    if excluded > 0 {
        log::warn!("{excluded} trial(s) excluded: reference PG did not converge");
    }
    let experiment = config.experiment.label().to_owned();
    let lidar = config.experiment.is_lidar();
    let records = trials.iter().flat_map(|t| records_for(&experiment, lidar, t)).collect();
    let summary = summarize(config, &experiment, &trials);
    Ok(BenchReport {
        experiment,
        trials,
        records,
        summary,
    })
}
