//! Two-mode mixture experiments: convergence demos, the DSM/HTDSM ×
//! diffusion grid and the shape sweep.

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{bootstrap_ci, mode_imbalance, BootstrapCi, FeatureSet, MetricReport};
use crate::rng::{derive_seed, seeded};
use crate::sampler::{ald_run, converged_endpoints, diverged_count, ParticlePath, SamplerConfig};
use crate::schedule::NoiseSchedule;
use crate::scorenet::{train, MixtureSpec, ScoreNetwork, TrainConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

fn default_ratio() -> f64 {
    10.0
}
fn default_per_mode() -> usize {
    10_000
}
fn default_particles() -> usize {
    1000
}
fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}
fn default_sweep() -> Vec<f64> {
    vec![1.0, 1.25, 1.5, 1.75, 2.0]
}
fn default_resamples() -> usize {
    10_000
}
fn default_level() -> f64 {
    0.95
}
fn default_two_levels() -> NoiseSchedule {
    NoiseSchedule::from_sigmas(vec![1.0, 0.25]).expect("valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Majority-to-minority weight ratio of the two-mode mixture.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Overrides the default two-mode geometry when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSpec>,
    /// Training points drawn for the majority mode; others scale by weight.
    #[serde(default = "default_per_mode")]
    pub samples_per_majority: usize,
    /// Training settings; `beta_noise` is replaced per cell.
    pub train: TrainConfig,
    /// Sampler settings; `diffusion_beta` and `seed` are replaced per run.
    pub sample: SamplerConfig,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Shapes for the sweep, each used for both training noise and diffusion.
    #[serde(default = "default_sweep")]
    pub sweep_betas: Vec<f64>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    /// Also compute PRDC/KID/FID of endpoints against held-out data.
    #[serde(default)]
    pub metrics: bool,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ratio: default_ratio(),
            mixture: None,
            samples_per_majority: default_per_mode(),
            train: TrainConfig::new(default_two_levels(), 2.0),
            sample: SamplerConfig::new(default_two_levels()),
            particles: default_particles(),
            seeds: default_seeds(),
            sweep_betas: default_sweep(),
            bootstrap_resamples: default_resamples(),
            ci_level: default_level(),
            metrics: false,
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if !(self.ratio.is_finite() && self.ratio >= 1.0) {
            return Err(Error::Config(format!("ratio must be >= 1, got {}", self.ratio)));
        }
        if self.particles == 0 || self.samples_per_majority == 0 {
            return Err(Error::Config("particle and sample counts must be >= 1".into()));
        }
        if let Some(b) = self.sweep_betas.iter().find(|b| !(b.is_finite() && **b > 0.0 && **b <= 2.0)) {
            return Err(Error::Config(format!("sweep shapes must lie in (0, 2], got {b}")));
        }
        self.train.validate()?;
        self.sample.validate()?;
        self.mixture()?;
        Ok(())
    }

    pub fn mixture(&self) -> Result<MixtureSpec> {
        match &self.mixture {
            Some(m) => Ok(m.clone()),
            None => MixtureSpec::two_mode(self.ratio),
        }
    }
}

/// One trained-and-sampled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: String,
    pub train_beta: f64,
    pub diffusion_beta: f64,
    pub seed: u64,
    /// Majority-mode percentage of the non-diverged particles.
    pub imbalance: Option<f64>,
    pub diverged: usize,
    pub particles: usize,
    pub loss_first_decile: f64,
    pub loss_last_decile: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn diverged_fraction(&self) -> f64 {
        self.diverged as f64 / self.particles as f64
    }

    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.wall_time_secs = other.wall_time_secs;
        &a == other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: String,
    pub train_beta: f64,
    pub diffusion_beta: f64,
    pub divergent: bool,
    /// Bootstrap interval over seeds that produced an imbalance value; absent when divergent.
    pub ci: Option<BootstrapCi>,
    pub seeds: usize,
    pub seeds_mostly_diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub ratio: f64,
    pub cells: Vec<CellSummary>,
    pub sweep: Vec<CellSummary>,
    pub records: Vec<RunRecord>,
}

impl GridReport {
    pub fn cell(&self, name: &str) -> Option<&CellSummary> {
        self.cells.iter().chain(&self.sweep).find(|c| c.cell == name)
    }

    /// Per-seed records of one cell, in seed order.
    pub fn cell_records(&self, name: &str) -> Vec<&RunRecord> {
        self.records.iter().filter(|r| r.cell == name).collect()
    }
}

/// A cell is divergent when more than half of its seeds lost more than half
/// of their particles.
pub fn is_divergent(records: &[&RunRecord]) -> bool {
    let bad = records.iter().filter(|r| r.diverged_fraction() > 0.5).count();
    2 * bad > records.len()
}

/// Grid cell name for a training and diffusion shape.
pub fn cell_name(train_beta: f64, diffusion_beta: f64) -> String {
    let train = if train_beta == 2.0 { "dsm".to_string() } else { format!("htdsm_b{train_beta}") };
    let diff = match diffusion_beta {
        2.0 => "gaussian".to_string(),
        1.0 => "laplace".to_string(),
        b => format!("gn_b{b}"),
    };
    format!("{train}+{diff}")
}

/// Training set and held-out reference set.
type SeedData = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Trains networks and samples particles, caching both by shape and seed so
/// that cells sharing a configuration reuse the same run.
pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    mixture: MixtureSpec,
    data: BTreeMap<u64, SeedData>,
    nets: BTreeMap<(u64, u64), (ScoreNetwork, f64, f64)>,
    runs: BTreeMap<(u64, u64, u64), RunRecord>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, mixture: cfg.mixture()?, data: BTreeMap::new(), nets: BTreeMap::new(), runs: BTreeMap::new() })
    }

    pub fn mixture(&self) -> &MixtureSpec {
        &self.mixture
    }

    /// Training set and held-out reference set for `seed`.
    fn data(&mut self, seed: u64) -> Result<&SeedData> {
        if !self.data.contains_key(&seed) {
            let counts = self.mixture.counts_for(self.cfg.samples_per_majority);
            let mut rng = seeded(derive_seed(self.cfg.master_seed, &format!("data/{seed}")));
            let train = self.mixture.sample_counts(&counts, &mut rng)?;
            let held_out = self.mixture.sample_counts(&self.mixture.counts_for(self.cfg.particles), &mut rng)?;
            self.data.insert(seed, (train, held_out));
        }
        Ok(&self.data[&seed])
    }

    fn train_all(&mut self, beta: f64) -> Result<()> {
        let pending: Vec<u64> =
            self.cfg.seeds.iter().copied().filter(|s| !self.nets.contains_key(&(beta.to_bits(), *s))).collect();
        for &s in &pending {
            self.data(s)?;
        }
        let master = self.cfg.master_seed;
        let data = &self.data;
        let mut tcfg = self.cfg.train.clone();
        tcfg.beta_noise = beta;
        let trained: Vec<Result<(u64, ScoreNetwork, f64, f64)>> = pending
            .par_iter()
            .map(|&s| {
                // The same initial weights and batches for every shape at a given seed.
                let mut rng = seeded(derive_seed(master, &format!("train/{s}")));
                let out = train(&data[&s].0, &tcfg, &mut rng)?;
                let (first, last) = out.decile_means();
                Ok((s, out.network, first, last))
            })
            .collect();
        for t in trained {
            let (s, net, first, last) = t?;
            self.nets.insert((beta.to_bits(), s), (net, first, last));
        }
        Ok(())
    }

    /// Trains with `train_beta` noise and samples with `diffusion_beta`
    /// diffusion for every seed, returning records in seed order.
    pub fn cell(&mut self, train_beta: f64, diffusion_beta: f64) -> Result<Vec<RunRecord>> {
        let name = cell_name(train_beta, diffusion_beta);
        self.train_all(train_beta)?;
        let key = |s: u64| (train_beta.to_bits(), diffusion_beta.to_bits(), s);
        let pending: Vec<u64> = self.cfg.seeds.iter().copied().filter(|s| !self.runs.contains_key(&key(*s))).collect();
        let cfg = self.cfg;
        let (nets, data, mixture) = (&self.nets, &self.data, &self.mixture);
        let fresh: Vec<Result<RunRecord>> = pending
            .par_iter()
            .map(|&s| {
                let start = Instant::now();
                let (net, first, last) = &nets[&(train_beta.to_bits(), s)];
                let mut scfg = cfg.sample.clone();
                scfg.diffusion_beta = diffusion_beta;
                scfg.seed = derive_seed(cfg.master_seed, &format!("sample/{s}"));
                scfg.record_paths = false;
                let paths = ald_run(net, &scfg, cfg.particles)?;
                let endpoints = converged_endpoints(&paths);
                let imbalance = if endpoints.is_empty() { None } else { Some(mode_imbalance(&endpoints, mixture)?) };
                let metrics = if cfg.metrics && endpoints.len() > 5 {
                    let real = FeatureSet::real(data[&s].1.clone())?;
                    let fake = FeatureSet::generated(endpoints)?;
                    MetricReport::compute(&real, &fake, 5).ok()
                } else {
                    None
                };
                Ok(RunRecord {
                    cell: name.clone(),
                    train_beta,
                    diffusion_beta,
                    seed: s,
                    imbalance,
                    diverged: diverged_count(&paths),
                    particles: cfg.particles,
                    loss_first_decile: *first,
                    loss_last_decile: *last,
                    metrics,
                    wall_time_secs: start.elapsed().as_secs_f64(),
                })
            })
            .collect();
        for r in fresh {
            let r = r?;
            self.runs.insert(key(r.seed), r);
        }
        Ok(self
            .cfg
            .seeds
            .iter()
            .map(|s| {
                let mut r = self.runs[&key(*s)].clone();
                r.cell = name.clone();
                r
            })
            .collect())
    }

    /// Aggregates per-seed records into a bootstrap summary.
    pub fn summarize(&self, records: &[RunRecord]) -> Result<CellSummary> {
        let first = records.first().ok_or_else(|| Error::Config("no records to summarize".into()))?;
        let refs: Vec<&RunRecord> = records.iter().collect();
        let divergent = is_divergent(&refs);
        let values: Vec<f64> = records.iter().filter_map(|r| r.imbalance).collect();
        let ci = if divergent || values.is_empty() {
            None
        } else {
            let mut rng = seeded(derive_seed(self.cfg.master_seed, &format!("bootstrap/{}", first.cell)));
            Some(bootstrap_ci(&values, self.cfg.bootstrap_resamples, self.cfg.ci_level, &mut rng)?)
        };
        Ok(CellSummary {
            cell: first.cell.clone(),
            train_beta: first.train_beta,
            diffusion_beta: first.diffusion_beta,
            divergent,
            ci,
            seeds: records.len(),
            seeds_mostly_diverged: records.iter().filter(|r| r.diverged_fraction() > 0.5).count(),
        })
    }
}

/// The four cells {DSM, HTDSM(β=1)} × {Gaussian, Laplace diffusion}.
pub const GRID_CELLS: [(f64, f64); 4] = [(2.0, 2.0), (1.0, 2.0), (2.0, 1.0), (1.0, 1.0)];

/// Runs the grid cells and the shape sweep.
pub fn run_imbalance_grid(cfg: &ExperimentConfig) -> Result<GridReport> {
    let mut runner = Runner::new(cfg)?;
    let mut records = Vec::new();
    let mut cells = Vec::new();
    for (tb, db) in GRID_CELLS {
        let recs = runner.cell(tb, db)?;
        let summary = runner.summarize(&recs)?;
        log::info!("{}: {:?}", summary.cell, summary.ci);
        cells.push(summary);
        records.extend(recs);
    }
    let sweep = sweep_with(&mut runner, &mut records)?;
    Ok(GridReport { ratio: cfg.ratio, cells, sweep, records })
}

fn sweep_with(runner: &mut Runner<'_>, records: &mut Vec<RunRecord>) -> Result<Vec<CellSummary>> {
    let mut sweep = Vec::new();
    for &beta in &runner.cfg.sweep_betas.clone() {
        let mut recs = runner.cell(beta, beta)?;
        for r in &mut recs {
            r.cell = format!("sweep_b{beta}");
        }
        sweep.push(runner.summarize(&recs)?);
        records.extend(recs);
    }
    Ok(sweep)
}

/// Shape sweep alone: matching training-noise and diffusion shape per β.
pub fn run_beta_sweep(cfg: &ExperimentConfig) -> Result<GridReport> {
    let mut runner = Runner::new(cfg)?;
    let mut records = Vec::new();
    let sweep = sweep_with(&mut runner, &mut records)?;
    Ok(GridReport { ratio: cfg.ratio, cells: Vec::new(), sweep, records })
}

/// Writes `grid.json`, `runs.csv` (per-seed values) and `sweep.csv`.
pub fn write_grid_outputs(report: &GridReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_json(&dir.join("grid.json"), report)?;

    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    w.write_record([
        "cell",
        "train_beta",
        "diffusion_beta",
        "seed",
        "imbalance",
        "diverged",
        "particles",
        "loss_first_decile",
        "loss_last_decile",
    ])?;
    for r in &report.records {
        w.write_record([
            r.cell.clone(),
            io::fmt_f64(r.train_beta),
            io::fmt_f64(r.diffusion_beta),
            r.seed.to_string(),
            r.imbalance.map(io::fmt_f64).unwrap_or_default(),
            r.diverged.to_string(),
            r.particles.to_string(),
            io::fmt_f64(r.loss_first_decile),
            io::fmt_f64(r.loss_last_decile),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    w.write_record(["beta", "mean", "lo", "hi", "divergent", "seeds"])?;
    for c in &report.sweep {
        let (m, lo, hi) =
            c.ci.map(|ci| (io::fmt_f64(ci.mean), io::fmt_f64(ci.lo), io::fmt_f64(ci.hi))).unwrap_or_default();
        w.write_record([io::fmt_f64(c.train_beta), m, lo, hi, c.divergent.to_string(), c.seeds.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub levels: usize,
    pub beta: f64,
    /// Diffusion shape; defaults to `beta`.
    #[serde(default)]
    pub diffusion_beta: Option<f64>,
    #[serde(default = "default_per_mode")]
    pub samples_per_mode: usize,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default)]
    pub train_steps: Option<usize>,
    #[serde(default)]
    pub step_size: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl DemoConfig {
    pub fn new(levels: usize, beta: f64) -> Self {
        Self {
            levels,
            beta,
            diffusion_beta: None,
            samples_per_mode: default_per_mode(),
            particles: default_particles(),
            train_steps: None,
            step_size: None,
            seed: 0,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        match self.levels {
            1 => NoiseSchedule::from_sigmas(vec![1.0]),
            2 => NoiseSchedule::from_sigmas(vec![1.0, 0.25]),
            n => Err(Error::Config(format!("demo supports 1 or 2 levels, got {n}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoOutput {
    pub record: RunRecord,
    pub mixture: MixtureSpec,
    pub network: ScoreNetwork,
    pub paths: Vec<ParticlePath>,
    pub losses: Vec<f64>,
}

impl DemoOutput {
    /// Fraction of all particles that ended within `radius_stds` component
    /// standard deviations of some mode mean.
    pub fn mode_capture(&self, radius_stds: f64) -> f64 {
        let m = &self.mixture;
        let hits = self
            .paths
            .iter()
            .filter(|p| {
                let k = m.nearest_mode(&p.final_position);
                let d: f64 =
                    m.means()[k].iter().zip(&p.final_position).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                d <= radius_stds * m.stds()[k]
            })
            .count();
        hits as f64 / self.paths.len() as f64
    }
}

/// Trains on the balanced two-mode mixture and samples with recorded paths.
pub fn run_convergence_demo(cfg: &DemoConfig) -> Result<DemoOutput> {
    let start = Instant::now();
    let schedule = cfg.schedule()?;
    let mixture = MixtureSpec::two_mode(1.0)?;
    let data = mixture.sample_counts(&[cfg.samples_per_mode; 2], &mut seeded(derive_seed(cfg.seed, "data")))?;
    let mut tcfg = TrainConfig::new(schedule.clone(), cfg.beta);
    if let Some(steps) = cfg.train_steps {
        tcfg.steps = steps;
    }
    let out = train(&data, &tcfg, &mut seeded(derive_seed(cfg.seed, "train")))?;
    let mut scfg = SamplerConfig::new(schedule);
    scfg.diffusion_beta = cfg.diffusion_beta.unwrap_or(cfg.beta);
    scfg.record_paths = true;
    scfg.seed = derive_seed(cfg.seed, "sample");
    if let Some(eps) = cfg.step_size {
        scfg.step_size = eps;
    }
    let paths = ald_run(&out.network, &scfg, cfg.particles)?;
    let endpoints = converged_endpoints(&paths);
    let (first, last) = out.decile_means();
    let record = RunRecord {
        cell: format!("demo_l{}_b{}", cfg.levels, cfg.beta),
        train_beta: cfg.beta,
        diffusion_beta: scfg.diffusion_beta,
        seed: cfg.seed,
        imbalance: if endpoints.is_empty() { None } else { Some(mode_imbalance(&endpoints, &mixture)?) },
        diverged: diverged_count(&paths),
        particles: cfg.particles,
        loss_first_decile: first,
        loss_last_decile: last,
        metrics: None,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(DemoOutput { record, mixture, network: out.network, paths, losses: out.losses })
}

/// Writes `paths.csv`, `endpoints.csv`, `losses.csv` and `record.json`.
pub fn write_demo_outputs(out: &DemoOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_paths_csv(&dir.join("paths.csv"), &out.paths)?;
    io::write_endpoints_csv(&dir.join("endpoints.csv"), &out.paths)?;
    let mut w = csv::Writer::from_path(dir.join("losses.csv"))?;
    w.write_record(["step", "loss"])?;
    for (i, l) in out.losses.iter().enumerate() {
        w.write_record([i.to_string(), io::fmt_f64(*l)])?;
    }
    w.flush()?;
    io::write_json(&dir.join("record.json"), &out.record)?;
    Ok(())
}
