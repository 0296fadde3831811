use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use proxicbo::Method;
use proxicbo_bench::config::builtin;
use proxicbo_bench::selftest::prox_selftest;
use proxicbo_bench::{run_benchmark, theory_check, BenchConfig, BenchError, Result, TheoryConfig};

#[derive(Parser)]
#[command(name = "proxicbo-bench", about = "ProxiCBO benchmark harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sparse recovery from one-bit non-monotonic measurements.
    OnebitSparse(RunArgs),
    /// TV-regularized image recovery from one-bit measurements.
    OnebitImage(RunArgs),
    /// Static single-photon lidar parameter estimation.
    Lidar(RunArgs),
    /// Lidar with a moving target.
    Doppler(RunArgs),
    /// Second-moment decay on E(v) = ‖v‖².
    TheoryCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the per-iteration moments as CSV to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized checks of every proximal operator.
    ProxSelftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; defaults to the committed config for the experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated particle counts.
    #[arg(long, value_delimiter = ',')]
    particles: Option<Vec<usize>>,
    /// Comma-separated methods (proxicbo, cbo, projcbo, pg, apg).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the full-scale trial counts and sizes from the config's `paper_scale` block.
    #[arg(long)]
    paper_scale: bool,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Record wall-clock time per run.
    #[arg(long)]
    timing: bool,
}

fn load_config(experiment: &str, args: &RunArgs) -> Result<BenchConfig> {
    let mut cfg = match &args.config {
        Some(path) => BenchConfig::load(path)?,
        None => BenchConfig::from_json(builtin(experiment).expect("known experiment"))?,
    };
    if cfg.experiment.label() != experiment {
        return Err(BenchError::Config(format!(
            "config describes `{}`, not `{experiment}`",
            cfg.experiment.label()
        )));
    }
    if args.paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(p) = &args.particles {
        cfg.particles = p.clone();
    }
    if let Some(m) = &args.methods {
        cfg.methods = m
            .iter()
            .map(|s| s.parse::<Method>().map_err(|e| BenchError::Config(e.to_string())))
            .collect::<Result<_>>()?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(o) = &args.out {
        cfg.out = o.clone();
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    cfg.record_timing |= args.timing;
    cfg.validate()?;
    Ok(cfg)
}

fn run_experiment(experiment: &str, args: &RunArgs) -> Result<ExitCode> {
    let cfg = load_config(experiment, args)?;
    let report = run_benchmark(&cfg)?;
    let (trials, summary) = report.write_csv(&cfg.out)?;
    for row in &report.summary {
        let crb = row.crb_std.map(|c| format!("  √CRB {c:.4e}")).unwrap_or_default();
        println!(
            "{:<9} N={:<5} success {:.3} ({} trials)  {} {:.4e}{crb}",
            row.method, row.n_particles, row.success_rate, row.trials, row.metric_name, row.metric_value
        );
    }
    println!("wrote {} and {}", trials.display(), summary.display());
    let (diverged, total) = (report.diverged_runs(), report.total_runs());
    if diverged as f64 > cfg.max_divergence_fraction * total as f64 {
        eprintln!(
            "{diverged} of {total} runs diverged (limit {:.0}%)",
            100.0 * cfg.max_divergence_fraction
        );
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn run_theory(config: Option<PathBuf>, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut cfg: TheoryConfig = match config {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| BenchError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| BenchError::Config(e.to_string()))?
        }
        None => TheoryConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    println!("{}", cfg.condition_text());
    let report = theory_check(&cfg)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let mut w = csv::Writer::from_path(dir.join("theory_check.csv"))?;
        w.write_record(["iteration", "time", "second_moment"])?;
        for (k, m) in report.moments.iter().enumerate() {
            w.write_record([k.to_string(), (k as f64 * cfg.dt).to_string(), m.to_string()])?;
        }
        w.flush()?;
    }
    for (k, m) in report.moments.iter().enumerate() {
        println!("iter {k:>4}  t = {:.3}  moment {m:.6e}", k as f64 * cfg.dt);
    }
    let bound = report.predicted_slope * (1.0 - cfg.slack);
    println!(
        "fitted slope {:.4} over {} points; need ≤ {:.4} (predicted {:.4}, slack {:.0}%): {}",
        report.fitted_slope,
        report.fit_points,
        bound,
        report.predicted_slope,
        100.0 * cfg.slack,
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(3) })
}

fn run_selftest(seed: u64, pairs: usize) -> Result<ExitCode> {
    let checks = prox_selftest(seed, pairs)?;
    for c in &checks {
        println!("{} {}  {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if checks.iter().all(|c| c.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::OnebitSparse(a) => run_experiment("onebit-sparse", &a),
        Command::OnebitImage(a) => run_experiment("onebit-image", &a),
        Command::Lidar(a) => run_experiment("lidar", &a),
        Command::Doppler(a) => run_experiment("doppler", &a),
        Command::TheoryCheck { config, seed, out } => run_theory(config, seed, out),
        Command::ProxSelftest { seed, pairs } => run_selftest(seed, pairs),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
