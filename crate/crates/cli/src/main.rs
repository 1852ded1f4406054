mod config;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use htdsm::distributions::gn_sample;
use htdsm::experiments::{self, DemoConfig, ExperimentConfig};
use htdsm::io;
use htdsm::metrics::{FeatureSet, MetricReport};
use htdsm::rng::{derive_seed, seeded};
use htdsm::sampler::{ald_run, diverged_count, ld_run, SamplerConfig};
use htdsm::schedule::{quantile_matched_schedule_with, QuantileMatchOptions, QuantileSource};
use htdsm::scorenet::{train, MixtureSpec, ScoreNetwork, TrainConfig};
use htdsm::selftest::run_selftest;
use htdsm::{Error, GeneralizedNormal, GnMethod};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Heavy-tailed denoising score matching toolkit.
///
/// Exit codes: 0 success, 1 numerical or runtime failure, 2 usage error.
#[derive(Parser, Debug)]
#[command(name = "htdsm", version)]
struct Cli {
    /// Master seed. Overrides any seed in a config file. [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Worker threads for particle and per-seed parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a quantile-matched noise schedule.
    Schedule(ScheduleArgs),
    /// Draw generalized-normal variates.
    Noise(NoiseArgs),
    /// Train a score network with denoising score matching.
    Train(TrainArgs),
    /// Run (annealed) Langevin dynamics from a checkpoint.
    Sample(SampleArgs),
    /// PRDC, KID and FID between two point sets.
    Metrics(MetricsArgs),
    /// Mixture experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Fast invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug)]
struct ScheduleArgs {
    /// Noise shape.
    #[arg(long)]
    beta: f64,
    /// Data dimension.
    #[arg(long)]
    dim: usize,
    /// Central mass whose quantiles are matched between adjacent levels.
    #[arg(long, default_value_t = 0.9)]
    delta: f64,
    #[arg(long)]
    sigma_min: f64,
    #[arg(long)]
    sigma_max: f64,
    /// Monte-Carlo quantiles of the true squared-norm sum instead of the model.
    #[arg(long)]
    empirical: bool,
    /// Draws for --empirical.
    #[arg(long, default_value_t = 100_000)]
    mc_count: usize,
    /// Append sigma_max as the top level when the matched sequence stops short.
    #[arg(long)]
    cap_at_max: bool,
    /// Output JSON file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    GammaPower,
    UniformMixture,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[arg(long)]
    beta: f64,
    /// Scale.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Location.
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, value_enum, default_value_t = Method::GammaPower)]
    method: Method,
    /// Output CSV with a single `x` column.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON training config; missing fields take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training points as CSV. Without it, the two-mode mixture is sampled.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Majority-to-minority ratio of the generated mixture.
    #[arg(long, default_value_t = 10.0)]
    ratio: f64,
    /// Generated points in the majority mode.
    #[arg(long, default_value_t = 10_000)]
    samples_per_majority: usize,
    /// Training-noise shape.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Noise levels, descending, comma separated.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Per-step losses as CSV.
    #[arg(long)]
    losses: Option<PathBuf>,
    /// Checkpoint JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Checkpoint from `train`.
    #[arg(long)]
    ckpt: PathBuf,
    /// JSON sampler config; missing fields take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    /// Diffusion shape.
    #[arg(long)]
    diffusion_beta: Option<f64>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    steps_per_level: Option<usize>,
    /// Noise levels, descending, comma separated.
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Plain Langevin dynamics at the largest level only.
    #[arg(long)]
    no_anneal: bool,
    /// Write `particle_id, status, x..` instead of full paths.
    #[arg(long)]
    endpoints_only: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    fake: PathBuf,
    /// Neighbours for PRDC.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    /// Mode imbalance grid over {DSM, HTDSM} x {Gaussian, Laplace} plus the shape sweep.
    Imbalance(ImbalanceArgs),
    /// Train and sample the balanced mixture with recorded paths.
    Demo(DemoArgs),
}

#[derive(Args, Debug)]
struct ImbalanceArgs {
    /// JSON experiment config; missing fields take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of seeds (0..N).
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    train_steps: Option<usize>,
    /// Skip the shape sweep.
    #[arg(long)]
    no_sweep: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// 1 (plain LD) or 2 (annealed) levels.
    #[arg(long, default_value_t = 2)]
    levels: usize,
    /// Training-noise shape.
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Diffusion shape [default: beta].
    #[arg(long)]
    diffusion_beta: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    #[arg(long)]
    train_steps: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn seed_of(cli_seed: Option<u64>) -> u64 {
    cli_seed.unwrap_or(0)
}

fn schedule_cmd(a: &ScheduleArgs, seed: u64) -> Result<()> {
    let source = if a.empirical {
        QuantileSource::Empirical { mc_count: a.mc_count, seed: derive_seed(seed, "schedule") }
    } else {
        QuantileSource::Model
    };
    let opts = QuantileMatchOptions { source, cap_at_max: a.cap_at_max };
    let s = quantile_matched_schedule_with(a.beta, a.dim, a.delta, a.sigma_min, a.sigma_max, opts)?;
    match &a.out {
        Some(path) => {
            io::write_json(path, &s)?;
            let check = if a.empirical || a.cap_at_max {
                String::new()
            } else {
                format!(", identity error {:e}", s.quantile_identity_error()?)
            };
            println!("{} levels from {} to {}{check}", s.len(), s.sigma_max(), s.sigma_min());
        }
        None => println!("{}", serde_json::to_string_pretty(&s)?),
    }
    Ok(())
}

fn noise_cmd(a: &NoiseArgs, seed: u64) -> Result<()> {
    let d = GeneralizedNormal::new(a.mu, a.alpha, a.beta)?;
    let mut rng = seeded(derive_seed(seed, "noise"));
    let xs = match a.method {
        Method::GammaPower => gn_sample(&d, &mut rng, a.count),
        Method::UniformMixture => d.sample(&mut rng, a.count, GnMethod::UniformMixture),
    };
    io::write_column_csv(&a.out, "x", &xs)?;
    println!("{} draws, variance {} (theory {})", xs.len(), htdsm::stats::variance(&xs), d.variance());
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: TrainConfig = config::layered(&ExperimentConfig::default().train, a.config.as_deref())?;
    if let Some(b) = a.beta {
        cfg.beta_noise = b;
    }
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(bs) = a.batch_size {
        cfg.batch_size = bs;
    }
    if let Some(s) = &a.sigmas {
        cfg.schedule = htdsm::NoiseSchedule::from_sigmas(s.clone())?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let data = match &a.data {
        Some(path) => io::read_points_csv(path)?,
        None => {
            let m = MixtureSpec::two_mode(a.ratio)?;
            m.sample_counts(&m.counts_for(a.samples_per_majority), &mut seeded(derive_seed(cfg.seed, "data")))?
        }
    };
    let out = train(&data, &cfg, &mut seeded(derive_seed(cfg.seed, "train")))?;
    io::write_json(&a.out, &out.network)?;
    if let Some(path) = &a.losses {
        io::write_column_csv(path, "loss", &out.losses)?;
    }
    let (first, last) = out.decile_means();
    println!("trained {} steps on {} points, loss {first} -> {last}", cfg.steps, data.len());
    Ok(())
}

fn sample_cmd(a: &SampleArgs, seed: Option<u64>) -> Result<()> {
    let net: ScoreNetwork = io::read_json(&a.ckpt).with_context(|| format!("loading {}", a.ckpt.display()))?;
    let mut cfg: SamplerConfig = config::layered(&ExperimentConfig::default().sample, a.config.as_deref())?;
    if let Some(b) = a.diffusion_beta {
        cfg.diffusion_beta = b;
    }
    if let Some(e) = a.step_size {
        cfg.step_size = e;
    }
    if let Some(t) = a.steps_per_level {
        cfg.steps_per_level = t;
    }
    if let Some(s) = &a.sigmas {
        cfg.schedule = htdsm::NoiseSchedule::from_sigmas(s.clone())?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.record_paths = !a.endpoints_only;
    cfg.validate()?;
    let paths = if a.no_anneal { ld_run(&net, &cfg, a.particles)? } else { ald_run(&net, &cfg, a.particles)? };
    if a.endpoints_only {
        io::write_endpoints_csv(&a.out, &paths)?;
    } else {
        io::write_paths_csv(&a.out, &paths)?;
    }
    println!("{} particles, {} diverged", paths.len(), diverged_count(&paths));
    Ok(())
}

fn metrics_cmd(a: &MetricsArgs) -> Result<()> {
    let real = FeatureSet::real(io::read_points_csv(&a.real)?)?;
    let fake = FeatureSet::generated(io::read_points_csv(&a.fake)?)?;
    let report = MetricReport::compute(&real, &fake, a.k)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(path) => {
            io::write_json(path, &report)?;
            println!("{text}");
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn imbalance_cmd(a: &ImbalanceArgs, seed: Option<u64>) -> Result<()> {
    let mut cfg: ExperimentConfig = config::layered(&ExperimentConfig::default(), a.config.as_deref())?;
    if let Some(n) = a.seeds {
        cfg.seeds = (0..n).collect();
    }
    if let Some(p) = a.particles {
        cfg.particles = p;
    }
    if let Some(t) = a.train_steps {
        cfg.train.steps = t;
    }
    if a.no_sweep {
        cfg.sweep_betas.clear();
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let report = experiments::run_imbalance_grid(&cfg)?;
    experiments::write_grid_outputs(&report, &a.out)?;
    for c in report.cells.iter().chain(&report.sweep) {
        match (&c.ci, c.divergent) {
            (_, true) => {
                println!("{:<24} divergent ({}/{} seeds mostly diverged)", c.cell, c.seeds_mostly_diverged, c.seeds)
            }
            (Some(ci), false) => println!("{:<24} {:.2} ({:.2}, {:.2})", c.cell, ci.mean, ci.lo, ci.hi),
            (None, false) => println!("{:<24} no converged particles", c.cell),
        }
    }
    Ok(())
}

fn demo_cmd(a: &DemoArgs, seed: u64) -> Result<()> {
    let mut cfg = DemoConfig::new(a.levels, a.beta);
    cfg.diffusion_beta = a.diffusion_beta;
    cfg.particles = a.particles;
    cfg.train_steps = a.train_steps;
    cfg.step_size = a.step_size;
    cfg.seed = seed;
    let out = experiments::run_convergence_demo(&cfg)?;
    experiments::write_demo_outputs(&out, &a.out)?;
    println!(
        "{}: {} diverged, {:.1}% within 3 std of a mode",
        out.record.cell,
        out.record.diverged,
        100.0 * out.mode_capture(3.0)
    );
    Ok(())
}

/// Returns whether every check passed.
fn selftest_cmd(a: &SelftestArgs, seed: u64) -> Result<bool> {
    let report = run_selftest(seed);
    for c in &report.checks {
        println!("{:<24} {} {}", c.name, if c.passed { "ok" } else { "FAILED" }, c.detail);
    }
    if let Some(path) = &a.out {
        io::write_json(path, &report)?;
    }
    Ok(report.passed)
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let seed = seed_of(cli.seed);
    match &cli.command {
        Command::Schedule(a) => schedule_cmd(a, seed)?,
        Command::Noise(a) => noise_cmd(a, seed)?,
        Command::Train(a) => train_cmd(a, cli.seed)?,
        Command::Sample(a) => sample_cmd(a, cli.seed)?,
        Command::Metrics(a) => metrics_cmd(a)?,
        Command::Experiment(ExperimentCommand::Imbalance(a)) => imbalance_cmd(a, cli.seed)?,
        Command::Experiment(ExperimentCommand::Demo(a)) => demo_cmd(a, seed)?,
        Command::Selftest(a) => {
            if !selftest_cmd(a, seed)? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// 2 for bad input, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| e.downcast_ref::<Error>().is_some_and(Error::is_usage));
    if usage {
        2
    } else {
        1
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
}

fn ensure_dir(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    if cli.workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let outputs: Vec<&Path> = match &cli.command {
        Command::Schedule(a) => a.out.iter().map(PathBuf::as_path).collect(),
        Command::Noise(a) => vec![&a.out],
        Command::Train(a) => vec![&a.out],
        Command::Sample(a) => vec![&a.out],
        Command::Metrics(a) => a.out.iter().map(PathBuf::as_path).collect(),
        _ => Vec::new(),
    };
    let result = outputs.into_iter().try_for_each(ensure_dir).and_then(|()| dispatch(&cli));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
