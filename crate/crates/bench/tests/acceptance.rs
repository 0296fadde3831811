//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --release --test acceptance -- 1 2`.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use proxicbo::linalg::{dist2, dist_inf, Matrix};
use proxicbo::oracles::{central_difference, lasso_coordinate_descent, normal_vec, tv_prox_primal_dual};
use proxicbo::prox::soft_threshold;
use proxicbo::sim::{gen_lidar_events, gen_onebit, ExperimentSpec, LidarSpec, OneBitSparseSpec};
use proxicbo::solver::{apg_step, cbo_step, pg_step, projcbo_step, proxicbo_step, ApgState};
use proxicbo::{
    BoxBounds, CompositeObjective, LeastSquares, Method, ParticleEnsemble, ProxOperator, Regularizer,
    SeparableQuadratic, SmoothTerm, SolverConfig, TvSettings, TvVariant,
};
use proxicbo_bench::config::builtin;
use proxicbo_bench::{run_benchmark, theory_check, BenchConfig, TheoryConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed.as_secs_f64() < limit_s as f64
}

// ---------------------------------------------------------------------------
// 1. Prox / Moreau suite

fn separable_operators(dim: usize) -> Vec<(&'static str, ProxOperator)> {
    let bounds = BoxBounds::new(
        (0..dim).map(|i| -1.0 + 0.1 * i as f64).collect(),
        (0..dim).map(|i| 1.0 + 0.2 * i as f64).collect(),
    )
    .unwrap();
    vec![
        ("zero", ProxOperator::zero()),
        ("l1", ProxOperator::l1(0.7).unwrap()),
        ("box", ProxOperator::boxed(bounds.clone())),
        ("indicator", ProxOperator::indicator(bounds.clone())),
        (
            "l1+box",
            ProxOperator::new(Regularizer::L1Box { weight: 0.3, bounds }).unwrap(),
        ),
    ]
}

fn tv_operator(side: usize, weight: f64, variant: TvVariant) -> ProxOperator {
    ProxOperator::with_tv_settings(
        Regularizer::TvBox {
            weight,
            height: side,
            width: side,
            lower: 0.0,
            upper: 1.0,
        },
        TvSettings {
            inner_iters: 20_000,
            inner_tol: 1e-12,
            variant,
        },
    )
    .unwrap()
}

fn criterion_1() -> Outcome {
    const PAIRS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut failures = Vec::new();
    let dim = 6;

    let mut ops = separable_operators(dim);
    for variant in [TvVariant::Anisotropic, TvVariant::Isotropic] {
        ops.push((
            if variant == TvVariant::Anisotropic { "tv-aniso+box" } else { "tv-iso+box" },
            tv_operator(3, 0.2, variant),
        ));
    }

    // Non-expansiveness.
    for (name, op) in &ops {
        let n = op.dim().unwrap_or(dim);
        // TV prox is solved iteratively; allow its inner tolerance.
        let slack = if name.starts_with("tv") { 1e-8 } else { 1e-15 };
        let mut worst = 0.0f64;
        for _ in 0..PAIRS {
            let mu = rng.random_range(0.01..3.0);
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (pu, pv) = (op.prox(&u, mu).unwrap(), op.prox(&v, mu).unwrap());
            worst = worst.max(dist2(&pu, &pv) - dist2(&u, &v) * (1.0 + 1e-12));
        }
        if worst > slack {
            failures.push(format!("{name} expands by {worst:.3e}"));
        }
    }

    // Projection idempotence.
    for (name, op) in ops.iter().filter(|(n, _)| *n == "box" || *n == "indicator") {
        for _ in 0..PAIRS {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
            let once = op.prox(&v, 1.0).unwrap();
            if op.prox(&once, 1.0).unwrap() != once {
                failures.push(format!("{name} not idempotent at {v:?}"));
                break;
            }
        }
    }

    // Moreau gradient against central differences away from kinks.
    let h = 1e-5;
    let mu = 0.6;
    let mut worst_moreau = 0.0f64;
    for (name, op) in separable_operators(4) {
        let mut checked = 0;
        while checked < 100 {
            let v: Vec<f64> = (0..4).map(|_| rng.random_range(-4.0..4.0)).collect();
            let near_kink = (0..4).any(|i| {
                let at = |d: f64| {
                    let mut w = v.clone();
                    w[i] += d;
                    op.prox(&w, mu).unwrap()[i]
                };
                (at(10.0 * h) - 2.0 * at(0.0) + at(-10.0 * h)).abs() > 1e-12
            });
            if near_kink {
                continue;
            }
            let grad = op.moreau_grad(&v, mu).unwrap();
            let fd = central_difference(|x| op.moreau_envelope(x, mu).unwrap(), &v, &[h; 4]);
            for i in 0..4 {
                let err = (grad[i] - fd[i]).abs() / grad[i].abs().max(1e-3);
                worst_moreau = worst_moreau.max(err);
                if err > 1e-5 {
                    failures.push(format!("{name} Moreau gradient rel err {err:.3e} at {v:?}"));
                }
            }
            checked += 1;
        }
    }

    // TV prox against the primal-dual oracle.
    let mut worst_tv = 0.0f64;
    let (side, weight, tv_mu) = (8, 0.1, 1.0);
    for k in 0..50 {
        let variant = if k % 2 == 0 { TvVariant::Anisotropic } else { TvVariant::Isotropic };
        let op = tv_operator(side, weight, variant);
        let v: Vec<f64> = (0..side * side).map(|_| rng.random_range(-0.5..1.5)).collect();
        let ours = op.prox(&v, tv_mu).unwrap();
        let oracle = tv_prox_primal_dual(&v, side, side, weight, 0.0, 1.0, tv_mu, variant, 20_000);
        worst_tv = worst_tv.max(dist_inf(&ours, &oracle));
    }
    if worst_tv > 1e-4 {
        failures.push(format!("TV prox ℓ∞ error {worst_tv:.3e}"));
    }

    failures.truncate(5);
    outcome(
        failures.is_empty(),
        format!(
            "{} operators x {PAIRS} pairs; Moreau max rel err {worst_moreau:.2e} (≤ 1e-5); TV vs oracle max ℓ∞ {worst_tv:.2e} (≤ 1e-4) on 50 8x8 images{}",
            ops.len(),
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") }
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Gradient oracles

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut notes = Vec::new();
    let mut pass = true;

    // One-bit data term at the benchmark size.
    let spec = ExperimentSpec::OneBitSparse(OneBitSparseSpec {
        d: 50,
        sparsity: 5,
        m: 200,
        omega: 10.0,
        lambda_scale: 0.25,
    });
    let (model, _) = gen_onebit(&spec, 7).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = model.cost_and_grad(&x).unwrap();
        let fd = central_difference(|p| model.cost(p).unwrap(), &x, &[1e-5; 50]);
        let num = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den = fd.iter().map(|b| b * b).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    pass &= worst <= 1e-5;
    notes.push(format!("one-bit max rel err {worst:.2e}"));

    // Both lidar models with the default parameters, at points around the truth.
    for doppler in [false, true] {
        let s = LidarSpec {
            velocity: if doppler { 15.0 } else { 0.0 },
            ..LidarSpec::default()
        };
        let spec = if doppler { ExperimentSpec::LidarDoppler(s) } else { ExperimentSpec::LidarStatic(s) };
        let truth = spec.lidar_truth().unwrap();
        let model = gen_lidar_events(&spec, &truth, 9).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let mut theta = truth.clone();
            theta[0] *= rng.random_range(0.5..2.0);
            theta[1] *= rng.random_range(0.5..2.0);
            theta[2] += rng.random_range(-0.3..0.3);
            if doppler {
                theta[3] += rng.random_range(-5.0..5.0);
            }
            // Large enough that cancellation in the quotient stays below the tolerance.
            let mut steps = vec![1e-4 * theta[0], 1e-4 * theta[1], 1e-4];
            if doppler {
                steps.push(1e-2);
            }
            let (_, g) = model.nll_and_grad(&theta).unwrap();
            let fd = central_difference(|p| model.nll(p).unwrap(), &theta, &steps);
            for i in 0..theta.len() {
                // Relative error per component; the floor covers components that vanish.
                let err = (g[i] - fd[i]).abs() / (g[i].abs().max(fd[i].abs()) + 1e-3);
                worst = worst.max(err);
            }
        }
        pass &= worst <= 1e-5;
        notes.push(format!(
            "{} lidar max rel err {worst:.2e}",
            if doppler { "doppler" } else { "static" }
        ));
    }
    outcome(pass, format!("{} (each ≤ 1e-5, 100 points)", notes.join("; ")))
}

// ---------------------------------------------------------------------------
// 3. Stationarity

fn criterion_3() -> Outcome {
    let w = vec![1.0, 2.0, 0.5, 4.0];
    let c = vec![1.5, -0.1, -2.0, 0.05];
    let lam = 0.3;
    let v_star: Vec<f64> = w.iter().zip(&c).map(|(wi, ci)| soft_threshold(*ci, lam / wi)).collect();
    let obj = CompositeObjective::new(
        Arc::new(SeparableQuadratic::new(w, c).unwrap()),
        ProxOperator::l1(lam).unwrap(),
        "quad-l1",
    )
    .unwrap();
    let dim = v_star.len();
    let n = 10;
    let mut worst = 0.0f64;
    for method in Method::ALL {
        let cfg = SolverConfig {
            method,
            mu: 0.2,
            sigma1: 1.0,
            sigma2: 1.0,
            ..SolverConfig::default()
        };
        let initial: Vec<f64> = v_star.iter().cycle().take(n * dim).copied().collect();
        let mut ens = ParticleEnsemble::new(dim, initial, 5).unwrap();
        ens.refresh_energies(&obj).unwrap();
        let mut x = v_star.clone();
        let mut apg = ApgState::new(v_star.clone());
        for _ in 0..100 {
            match method {
                Method::ProxiCbo => proxicbo_step(&mut ens, &obj, &cfg).unwrap(),
                Method::Cbo => cbo_step(&mut ens, &obj, &cfg).unwrap(),
                Method::ProjCbo => projcbo_step(&mut ens, &obj, None, &cfg).unwrap(),
                Method::Pg => x = pg_step(&x, &obj, cfg.mu).unwrap(),
                Method::Apg => apg_step(&mut apg, &obj, cfg.mu).unwrap(),
            }
            let dev = match method {
                Method::Pg => dist_inf(&x, &v_star),
                Method::Apg => dist_inf(&apg.x, &v_star),
                _ => (0..n).map(|i| dist_inf(ens.particle(i), &v_star)).fold(0.0, f64::max),
            };
            worst = worst.max(dev);
        }
    }
    outcome(
        worst <= 1e-12,
        format!(
            "max ℓ∞ drift over 100 iterations across {} methods: {worst:.2e} (≤ 1e-12)",
            Method::ALL.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Second-moment decay

fn criterion_4() -> Outcome {
    let cfg = TheoryConfig::default();
    assert_eq!((cfg.dim, cfg.particles), (2, 2000));
    assert_eq!(cfg.floor, 1e-4);
    assert_eq!(cfg.slack, 0.3);
    match theory_check(&cfg) {
        Ok(r) => outcome(
            r.pass,
            format!(
                "rate {:.4}; fitted slope {:.4} vs required ≤ {:.4} (-0.5·rate, 30% slack) over {} points",
                r.rate,
                r.fitted_slope,
                r.predicted_slope * (1.0 - cfg.slack),
                r.fit_points
            ),
        ),
        Err(e) => outcome(false, format!("theory check failed to run: {e}")),
    }
}

// ---------------------------------------------------------------------------
// 5. One-bit sparse ordering

fn criterion_5() -> Outcome {
    let cfg = BenchConfig::from_json(builtin("onebit-sparse").unwrap()).unwrap();
    match &cfg.experiment {
        ExperimentSpec::OneBitSparse(s) => {
            assert_eq!((s.d, s.sparsity, s.m), (50, 5, 200));
            assert_eq!(s.omega, 10.0);
            assert_eq!(s.lambda_scale, 0.25);
        }
        other => panic!("unexpected experiment {other:?}"),
    }
    assert_eq!(cfg.trials, 100);
    assert_eq!(cfg.particles, vec![10, 100, 1000]);
    for m in [Method::ProxiCbo, Method::Cbo, Method::Pg, Method::Apg] {
        assert!(cfg.methods.contains(&m));
    }

    let report = match run_benchmark(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("benchmark failed: {e}")),
    };
    let rate = |m: Method, n: usize| report.success_rate(m, n).unwrap_or(f64::NAN);
    let baselines = [Method::Cbo, Method::Pg, Method::Apg];
    let mut pass = true;
    let mut table = Vec::new();
    for &n in &cfg.particles {
        let p = rate(Method::ProxiCbo, n);
        let row: Vec<String> = std::iter::once(format!("proxicbo {p:.2}"))
            .chain(baselines.iter().map(|&b| format!("{b} {:.2}", rate(b, n))))
            .collect();
        pass &= baselines.iter().all(|&b| p >= rate(b, n));
        table.push(format!("N={n}: {}", row.join(" ")));
    }
    let p100 = rate(Method::ProxiCbo, 100);
    pass &= baselines.iter().all(|&b| p100 >= rate(b, 1000));
    outcome(
        pass,
        format!(
            "{} (need proxicbo ≥ each baseline at every N and proxicbo@100 ≥ each baseline@1000)",
            table.join("; ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. Static lidar against the CRB

fn criterion_6() -> Outcome {
    let mut cfg = BenchConfig::from_json(builtin("lidar").unwrap()).unwrap();
    match &cfg.experiment {
        ExperimentSpec::LidarStatic(s) => {
            let d = LidarSpec::default();
            assert_eq!((s.pulses, s.signal, s.background, s.t_a), (500, 0.1, 1e-4, 5e5));
            assert_eq!((s.tau, s.pulse_sigma), (d.tau, d.pulse_sigma));
        }
        other => panic!("unexpected experiment {other:?}"),
    }
    cfg.methods = vec![Method::ProxiCbo];
    cfg.particles = vec![100];
    cfg.trials = 200;

    let report = match run_benchmark(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("benchmark failed: {e}")),
    };
    let success = report.success_rate(Method::ProxiCbo, 100).unwrap_or(0.0);
    let mut pass = success >= 0.95;
    let (counted, excluded) = report
        .summary_for(Method::ProxiCbo, 100)
        .next()
        .map_or((0, 0), |r| (r.trials, r.excluded));
    let mut parts = vec![format!(
        "success {success:.3} (≥ 0.95) over {counted} trials, {excluded} excluded for a non-converged reference"
    )];
    for row in report.summary_for(Method::ProxiCbo, 100) {
        let crb = row.crb_std.unwrap_or(f64::NAN);
        let ratio = row.metric_value / crb;
        pass &= ratio <= 2.0;
        parts.push(format!("{} {:.3e} = {ratio:.2}·√CRB", row.metric_name, row.metric_value));
    }
    outcome(pass, format!("{} (each ≤ 2·√CRB)", parts.join("; ")))
}

// ---------------------------------------------------------------------------
// 7. Determinism across worker counts

fn criterion_7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut sparse = BenchConfig::from_json(builtin("onebit-sparse").unwrap()).unwrap();
    sparse.trials = 6;
    sparse.particles = vec![10, 50];
    let mut lidar = BenchConfig::from_json(builtin("lidar").unwrap()).unwrap();
    lidar.trials = 3;
    lidar.particles = vec![20];
    lidar.solver.max_iters = 300;

    let mut pass = true;
    let mut compared = 0;
    for (name, base) in [("onebit-sparse", sparse), ("lidar", lidar)] {
        let mut files = Vec::new();
        for (k, threads) in [1, 2, 3].into_iter().enumerate() {
            let mut cfg = base.clone();
            cfg.threads = threads;
            let (trials, summary) = run_benchmark(&cfg)
                .unwrap()
                .write_csv(&dir.path().join(format!("{name}-{k}")))
                .unwrap();
            files.push((std::fs::read(trials).unwrap(), std::fs::read(summary).unwrap()));
        }
        pass &= files.windows(2).all(|w| w[0] == w[1]);
        compared += files.len();
    }
    outcome(
        pass,
        format!("{compared} runs over 2 experiments with 1, 2 and 3 workers: trial and summary CSVs byte-identical"),
    )
}

// ---------------------------------------------------------------------------
// 8. LASSO baselines

fn criterion_8() -> Outcome {
    let d = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let m = 2 * d;
    let a = Matrix::from_row_major(m, d, normal_vec(&mut rng, m * d)).unwrap();
    let b = normal_vec(&mut rng, m);
    let lam = 0.5;
    let ls = LeastSquares::new(a.clone(), b.clone()).unwrap();
    let l = ls.lipschitz().unwrap();
    let obj = CompositeObjective::new(Arc::new(ls), ProxOperator::l1(lam).unwrap(), "lasso").unwrap();
    let x_cd = lasso_coordinate_descent(&a, &b, lam, 1e-15, 100_000);
    let e_star = obj.energy(&x_cd).unwrap();
    let mu = 1.0 / l;
    let iters = 20_000;

    let mut x = vec![0.0; d];
    let mut pg_hit = None;
    for k in 1..=iters {
        x = pg_step(&x, &obj, mu).unwrap();
        if pg_hit.is_none() && obj.energy(&x).unwrap() - e_star <= 1e-6 {
            pg_hit = Some(k);
        }
    }
    let mut s = ApgState::new(vec![0.0; d]);
    let mut apg_hit = None;
    for k in 1..=iters {
        apg_step(&mut s, &obj, mu).unwrap();
        if apg_hit.is_none() && obj.energy(&s.x).unwrap() - e_star <= 1e-6 {
            apg_hit = Some(k);
        }
    }
    let (pg_err, apg_err) = (dist_inf(&x, &x_cd), dist_inf(&s.x, &x_cd));
    let faster = matches!((apg_hit, pg_hit), (Some(a), Some(p)) if a < p);
    outcome(
        pg_err <= 1e-6 && apg_err <= 1e-6 && faster,
        format!(
            "ℓ∞ distance to coordinate descent: PG {pg_err:.2e}, APG {apg_err:.2e} (≤ 1e-6); iterations to 1e-6 gap: APG {apg_hit:?} < PG {pg_hit:?}"
        ),
    )
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    type Check = fn() -> Outcome;
    let criteria: [(u32, &str, u64, Check); 8] = [
        (1, "prox/Moreau suite", 60, criterion_1),
        (2, "gradient oracles", 60, criterion_2),
        (3, "stationarity", 60, criterion_3),
        (4, "second-moment decay", 120, criterion_4),
        (5, "one-bit sparse ordering", 1800, criterion_5),
        (6, "static lidar CRB", 1800, criterion_6),
        (7, "determinism", u64::MAX, criterion_7),
        (8, "LASSO baselines", 60, criterion_8),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();

    let mut all = true;
    for (id, name, limit, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let on_time = within(elapsed, limit);
        let pass = o.pass && on_time;
        all &= pass;
        let budget = if limit == u64::MAX { String::new() } else { format!(" (limit {limit} s)") };
        println!(
            "criterion {id} [{name}]: {} | {} | {:.1} s{budget}",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
