//! Command-line interface to the sequential anomaly identification crate.
//!
//! All results are written as CSV to --out (default stdout); diagnostics go
//! to stderr. Given the same configuration and seed, every subcommand
//! produces byte-identical output.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use seqanom::allocation::{
    c_star_familywise, c_star_misclass, difficulty_familywise, difficulty_misclass,
    AllocationVector, DifficultyReport,
};
use seqanom::maxmin::{solve_v, solve_w};
use seqanom::model::{OrderedKlSet, SourceModel};
use seqanom::sim::{
    calibrate, monte_carlo, reproduce, write_summary_csv, write_trace_csv, Engine, Metric,
    ReproducePreset, RunConfig, SamplerChoice, ThresholdSet, DEFAULT_CALIBRATION_TOL,
};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "seqanom",
    version,
    about = "Sequential anomaly identification over many data sources under a per-instant \
             sampling budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the max-min budget allocation over one rate set, or balance two
    /// rate sets when --kappa2/--L2 are given.
    Solve(SolveArgs),
    /// Print the difficulty and the target sampling frequencies c*(A) for
    /// the configured problem.
    Alloc(RunArgs),
    /// Record a single trial as one CSV row per sampling instant.
    Trace(RunArgs),
    /// Estimate mean stopping time and error rates over many trials.
    Simulate(RunArgs),
    /// Tune stopping thresholds until the empirical error rates meet the
    /// configured targets.
    Calibrate(RunArgs),
    /// Emit a named benchmark sweep as CSV.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Number of smallest rate products summed by the objective.
    #[arg(long)]
    kappa: usize,
    /// Total budget to distribute.
    #[arg(long = "K")]
    budget: f64,
    /// Comma-separated positive rates.
    #[arg(long = "L", value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Objective order for the second rate set (two-block balance).
    #[arg(long)]
    kappa2: Option<usize>,
    /// Comma-separated rates of the second set (two-block balance).
    #[arg(long = "L2", value_delimiter = ',')]
    rates2: Option<Vec<f64>>,
    /// Value ratio between the two blocks (two-block balance; default 1).
    #[arg(long)]
    r: Option<f64>,
    /// Output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a key=value run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per Monte-Carlo batch override.
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Misclassification order override (misclass metric only).
    #[arg(long)]
    k: Option<usize>,
    /// False-positive order override (familywise metric only).
    #[arg(long)]
    k1: Option<usize>,
    /// False-negative order override (familywise metric only).
    #[arg(long)]
    k2: Option<usize>,
    /// Per-instant budget override.
    #[arg(long = "K")]
    budget: Option<f64>,
    /// Sampler override: auto, plain, or forced.
    #[arg(long)]
    sampler: Option<String>,
    /// Forced-exploration decay exponent override.
    #[arg(long)]
    delta: Option<f64>,
    /// Forced-exploration scale override.
    #[arg(long)]
    cp: Option<f64>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Which sweep to emit: fig1, fig2, fig3, fig4, table1, eq76, or eq80.
    #[arg(long)]
    figure: String,
    /// Output file (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per Monte-Carlo evaluation (simulation sweeps).
    #[arg(long, default_value_t = 10_000)]
    runs: u64,
    /// Root seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn open_sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let file = fs::File::create(p)
                .with_context(|| format!("cannot create output file {}", p.display()))?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config file {}", args.config.display()))?;
    let mut cfg = RunConfig::parse(&text)
        .with_context(|| format!("in config file {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(runs) = args.runs {
        cfg.runs = runs;
    }
    if let Some(alpha) = args.alpha {
        cfg.alpha = alpha;
    }
    if let Some(beta) = args.beta {
        cfg.beta = Some(beta);
    }
    if let Some(budget) = args.budget {
        cfg.budget = budget;
    }
    if let Some(delta) = args.delta {
        cfg.delta = delta;
    }
    if let Some(cp) = args.cp {
        cfg.c_p = cp;
    }
    if let Some(sampler) = &args.sampler {
        cfg.sampler = match sampler.as_str() {
            "auto" => SamplerChoice::Auto,
            "plain" => SamplerChoice::Plain,
            "forced" => SamplerChoice::Forced,
            other => bail!("--sampler must be auto, plain, or forced, got '{other}'"),
        };
    }
    match &mut cfg.metric {
        Metric::Misclass { k } => {
            if args.k1.is_some() || args.k2.is_some() {
                bail!("the configured metric is misclass; use --k, not --k1/--k2");
            }
            if let Some(kk) = args.k {
                *k = kk;
            }
        }
        Metric::Familywise { k1, k2 } => {
            if args.k.is_some() {
                bail!("the configured metric is familywise; use --k1/--k2, not --k");
            }
            if let Some(kk) = args.k1 {
                *k1 = kk;
            }
            if let Some(kk) = args.k2 {
                *k2 = kk;
            }
        }
    }
    Ok(cfg)
}

fn models_from(cfg: &RunConfig) -> Result<Vec<SourceModel>> {
    Ok(cfg
        .mus
        .iter()
        .enumerate()
        .map(|(i, &mu)| SourceModel::gaussian_unit_variance(i, mu))
        .collect::<seqanom::Result<_>>()?)
}

fn ordered_set(rates: &[f64]) -> Result<OrderedKlSet> {
    Ok(OrderedKlSet::new(
        rates.iter().copied().enumerate().collect(),
    )?)
}

/// Map position-indexed frequencies back to the caller's input order.
fn positions_to_input_order(set: &OrderedKlSet, c_prime: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; set.len()];
    for (pos, &v) in c_prime.iter().enumerate() {
        c[set.source_at(pos)] = v;
    }
    c
}

fn write_frequency_rows<W: Write>(out: &mut W, prefix: &str, c: &[f64]) -> Result<()> {
    for (i, v) in c.iter().enumerate() {
        writeln!(out, "{prefix}{},{v}", i + 1)?;
    }
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    // Solve before opening the sink so a failed run writes nothing.
    let l1 = ordered_set(&args.rates)?;
    let (one, two) = match (args.kappa2, &args.rates2) {
        (None, None) => {
            if args.r.is_some() {
                bail!("--r applies only to the two-block balance (--kappa2/--L2)");
            }
            (Some(solve_v(args.kappa, args.budget, &l1)?), None)
        }
        (Some(kappa2), Some(rates2)) => {
            let l2 = ordered_set(rates2)?;
            let sol = solve_w(args.kappa, kappa2, args.budget, &l1, &l2, args.r.unwrap_or(1.0))?;
            (None, Some((sol, l2)))
        }
        _ => bail!("--kappa2 and --L2 must be given together"),
    };
    let mut out = open_sink(&args.out)?;
    writeln!(out, "key,value")?;
    if let Some(sol) = one {
        writeln!(out, "value,{}", sol.value)?;
        writeln!(out, "x,{}", sol.x)?;
        writeln!(out, "y,{}", sol.y)?;
        writeln!(out, "u,{}", sol.u)?;
        writeln!(out, "v,{}", sol.v)?;
        let c = positions_to_input_order(&l1, &sol.c_prime);
        write_frequency_rows(&mut out, "c_", &c)?;
    }
    if let Some((sol, l2)) = two {
        writeln!(out, "value,{}", sol.value)?;
        writeln!(out, "k1_star,{}", sol.k1_star)?;
        writeln!(out, "k2_star,{}", sol.k2_star)?;
        for (tag, p) in [("hat", &sol.hat), ("check", &sol.check)] {
            writeln!(out, "{tag}_x,{}", p.x)?;
            writeln!(out, "{tag}_y,{}", p.y)?;
            writeln!(out, "{tag}_u,{}", p.u)?;
            writeln!(out, "{tag}_v,{}", p.v)?;
        }
        let c1 = positions_to_input_order(&l1, &sol.c_hat);
        let c2 = positions_to_input_order(&l2, &sol.c_check);
        write_frequency_rows(&mut out, "c1_", &c1)?;
        write_frequency_rows(&mut out, "c2_", &c2)?;
    }
    out.flush()?;
    Ok(())
}

fn difficulty_and_targets(cfg: &RunConfig) -> Result<(DifficultyReport, AllocationVector)> {
    let models = models_from(cfg)?;
    Ok(match cfg.metric {
        Metric::Misclass { k } => (
            difficulty_misclass(&models, cfg.a_true, k, cfg.budget)?,
            c_star_misclass(&models, cfg.a_true, k, cfg.budget)?,
        ),
        Metric::Familywise { k1, k2 } => {
            let r = cfg.ratio();
            (
                difficulty_familywise(&models, cfg.a_true, k1, k2, cfg.budget, r)?,
                c_star_familywise(&models, cfg.a_true, k1, k2, cfg.budget, r)?,
            )
        }
    })
}

fn cmd_alloc(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let (report, targets) = difficulty_and_targets(&cfg)?;
    let mut out = open_sink(&args.out)?;
    writeln!(out, "key,value")?;
    writeln!(out, "difficulty,{}", report.value)?;
    writeln!(out, "case,{}", report.case.label())?;
    writeln!(out, "l_a,{}", report.l_a)?;
    if let Some((first, second)) = report.split {
        writeln!(out, "budget_first,{first}")?;
        writeln!(out, "budget_second,{second}")?;
    }
    write_frequency_rows(&mut out, "c_", &targets.c)?;
    out.flush()?;
    Ok(())
}

fn cmd_trace(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let engine = Engine::new(&cfg)?;
    let mut rng = Engine::trial_rng(cfg.seed, 0, 0);
    let trace = engine.run_trace(cfg.max_steps, &mut rng)?;
    match &trace.outcome {
        Some(o) => eprintln!(
            "stopped after {} instants; declared {{{}}} with {} errors",
            o.steps, o.decided, o.errors
        ),
        None => eprintln!(
            "horizon of {} instants reached without a decision",
            cfg.max_steps
        ),
    }
    let mut out = open_sink(&args.out)?;
    write_trace_csv(&mut out, &trace)?;
    out.flush()?;
    Ok(())
}

fn cmd_simulate(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let engine = Engine::new(&cfg)?;
    let summary = monte_carlo(&engine, cfg.runs, cfg.seed, 0)?;
    eprintln!(
        "{} trials: mean stopping time {:.3}, alpha-side error rate {:.6}",
        summary.runs, summary.mean_steps, summary.err_alpha.rate
    );
    let mut out = open_sink(&args.out)?;
    write_summary_csv(&mut out, &summary)?;
    out.flush()?;
    Ok(())
}

fn cmd_calibrate(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let engine = Engine::new(&cfg)?;
    let cal = calibrate(
        &engine,
        cfg.runs,
        cfg.seed,
        cfg.calibration,
        DEFAULT_CALIBRATION_TOL,
    )?;
    let mut out = open_sink(&args.out)?;
    writeln!(out, "key,value")?;
    match cal.thresholds {
        ThresholdSet::Misclass { d } => writeln!(out, "threshold_d,{d}")?,
        ThresholdSet::Familywise { a, b } => {
            writeln!(out, "threshold_a,{a}")?;
            writeln!(out, "threshold_b,{b}")?;
        }
    }
    writeln!(out, "probes_used,{}", cal.probes_used)?;
    let s = &cal.summary;
    writeln!(out, "runs,{}", s.runs)?;
    writeln!(out, "mean_steps,{}", s.mean_steps)?;
    writeln!(out, "se_steps,{}", s.se_steps)?;
    writeln!(out, "mean_samples,{}", s.mean_samples)?;
    writeln!(out, "alpha_rate,{}", s.err_alpha.rate)?;
    writeln!(out, "alpha_ci_lo,{}", s.err_alpha.ci95.0)?;
    writeln!(out, "alpha_ci_hi,{}", s.err_alpha.ci95.1)?;
    if let Some(b) = &s.err_beta {
        writeln!(out, "beta_rate,{}", b.rate)?;
        writeln!(out, "beta_ci_lo,{}", b.ci95.0)?;
        writeln!(out, "beta_ci_hi,{}", b.ci95.1)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<()> {
    let preset: ReproducePreset = args.figure.parse()?;
    let mut out = open_sink(&args.out)?;
    reproduce(preset, args.runs, args.seed, &mut out)?;
    out.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Alloc(args) => cmd_alloc(args),
        Command::Trace(args) => cmd_trace(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Reproduce(args) => cmd_reproduce(args),
    }
}
