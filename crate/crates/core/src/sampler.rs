//! Langevin dynamics, annealed Langevin dynamics and the forward noising chain.

use crate::distributions::{unit_variance_alpha, GeneralizedNormal, GnMethod};
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::schedule::NoiseSchedule;
use crate::scorenet::{ScoreNetwork, Scratch};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A score field `s(x, log σ)` that can be evaluated from many threads.
pub trait ScoreFn: Sync {
    type Workspace: Send;

    fn dim(&self) -> usize;
    fn workspace(&self) -> Self::Workspace;
    fn eval(&self, x: &[f64], log_sigma: f64, ws: &mut Self::Workspace, out: &mut [f64]);
}

impl ScoreFn for ScoreNetwork {
    type Workspace = Scratch;

    fn dim(&self) -> usize {
        self.data_dim()
    }

    fn workspace(&self) -> Scratch {
        self.scratch()
    }

    fn eval(&self, x: &[f64], log_sigma: f64, ws: &mut Scratch, out: &mut [f64]) {
        out.copy_from_slice(self.forward_with(x, log_sigma, ws));
    }
}

/// Wraps a closure `f(x, log σ, out)` as a [`ScoreFn`].
pub struct FnScore<F> {
    dim: usize,
    f: F,
}

impl<F> FnScore<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> ScoreFn for FnScore<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    type Workspace = ();

    fn dim(&self) -> usize {
        self.dim
    }

    fn workspace(&self) {}

    fn eval(&self, x: &[f64], log_sigma: f64, _: &mut (), out: &mut [f64]) {
        (self.f)(x, log_sigma, out)
    }
}

fn default_steps() -> usize {
    1000
}
fn default_step_size() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    2.0
}
fn default_temperature() -> f64 {
    1.0
}
fn default_half_width() -> f64 {
    6.0
}
fn default_radius() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub schedule: NoiseSchedule,
    /// Steps T at every level.
    #[serde(default = "default_steps")]
    pub steps_per_level: usize,
    /// Base step size ε; level i uses ε·σᵢ²/σ₁².
    #[serde(default = "default_step_size")]
    pub step_size: f64,
    /// Shape of the injected noise (2 = Gaussian, 1 = Laplace), always scaled to unit variance.
    #[serde(default = "default_beta")]
    pub diffusion_beta: f64,
    /// Multiplier on the injected noise; 0 gives plain gradient ascent.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_half_width")]
    pub init_half_width: f64,
    #[serde(default = "default_radius")]
    pub divergence_radius: f64,
    #[serde(default)]
    pub record_paths: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SamplerConfig {
    pub fn new(schedule: NoiseSchedule) -> Self {
        Self {
            schedule,
            steps_per_level: default_steps(),
            step_size: default_step_size(),
            diffusion_beta: default_beta(),
            temperature: default_temperature(),
            init_half_width: default_half_width(),
            divergence_radius: default_radius(),
            record_paths: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.step_size.is_finite() && self.step_size >= 0.0) {
            return Err(Error::Config(format!("step size must be >= 0, got {}", self.step_size)));
        }
        if self.steps_per_level == 0 {
            return Err(Error::Config("steps per level must be >= 1".into()));
        }
        if !(self.diffusion_beta.is_finite() && self.diffusion_beta > 0.0) {
            return Err(Error::Config(format!("diffusion beta must be > 0, got {}", self.diffusion_beta)));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        if !(self.init_half_width.is_finite() && self.init_half_width > 0.0) {
            return Err(Error::Config("init half-width must be > 0".into()));
        }
        if !(self.divergence_radius > self.init_half_width) {
            return Err(Error::Config(format!(
                "divergence radius {} must exceed init half-width {}",
                self.divergence_radius, self.init_half_width
            )));
        }
        Ok(())
    }

    /// Step size at each schedule level.
    pub fn level_step_sizes(&self) -> Vec<f64> {
        let top = self.schedule.sigma_max();
        self.schedule.sigmas.iter().map(|s| self.step_size * s * s / (top * top)).collect()
    }
}

/// Unit-variance generalized-normal noise used for diffusion and chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionNoise {
    beta: f64,
    dist: GeneralizedNormal,
}

impl DiffusionNoise {
    pub fn new(beta: f64) -> Result<Self> {
        let dist = GeneralizedNormal::new(0.0, unit_variance_alpha(beta)?, beta)?;
        Ok(Self { beta, dist })
    }

    pub fn gaussian() -> Self {
        Self::new(2.0).expect("valid shape")
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.beta == 2.0 {
            StandardNormal.sample(rng)
        } else {
            self.dist.sample_one(rng, GnMethod::GammaPower)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Diverged,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub level: usize,
    pub step: usize,
    pub position: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticlePath {
    pub id: usize,
    /// Initial point (level 0, step 0) followed by every update; empty unless recorded.
    pub points: Vec<PathPoint>,
    /// ‖s(x)‖ at every evaluation.
    pub score_norms: Vec<f64>,
    pub initial_position: Vec<f64>,
    pub final_position: Vec<f64>,
    pub status: Status,
    pub score_evals: usize,
}

fn escaped(x: &[f64], radius: f64) -> bool {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    !(r2.is_finite() && r2 <= radius * radius && x.iter().all(|v| v.is_finite()))
}

/// Diverged iff any position has norm above `radius` or a non-finite coordinate.
pub fn detect_divergence<'a, I>(positions: I, radius: f64) -> Status
where
    I: IntoIterator<Item = &'a [f64]>,
{
    if positions.into_iter().any(|x| escaped(x, radius)) {
        Status::Diverged
    } else {
        Status::Converged
    }
}

fn run_particle<S: ScoreFn>(
    score: &S,
    cfg: &SamplerConfig,
    levels: &[f64],
    noise: &DiffusionNoise,
    id: usize,
) -> ParticlePath {
    let dim = score.dim();
    let mut rng = substream(cfg.seed, id as u64);
    let h = cfg.init_half_width;
    let mut x: Vec<f64> = (0..dim).map(|_| rng.random_range(-h..h)).collect();
    let initial_position = x.clone();
    let mut ws = score.workspace();
    let mut s = vec![0.0; dim];
    let mut points = Vec::new();
    if cfg.record_paths {
        points.push(PathPoint { level: 0, step: 0, position: x.clone() });
    }
    let mut score_norms = Vec::with_capacity(levels.len() * cfg.steps_per_level);
    let mut status = detect_divergence([x.as_slice()], cfg.divergence_radius);
    let top = cfg.schedule.sigma_max();
    for (level, &sigma) in levels.iter().enumerate() {
        let eps = cfg.step_size * sigma * sigma / (top * top);
        let kick = (2.0 * eps).sqrt() * cfg.temperature;
        let log_sigma = sigma.ln();
        for step in 1..=cfg.steps_per_level {
            score.eval(&x, log_sigma, &mut ws, &mut s);
            score_norms.push(s.iter().map(|v| v * v).sum::<f64>().sqrt());
            for (xi, si) in x.iter_mut().zip(&s) {
                let z = if kick > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                *xi += eps * si + kick * z;
            }
            if escaped(&x, cfg.divergence_radius) {
                status = Status::Diverged;
            }
            if cfg.record_paths {
                points.push(PathPoint { level, step, position: x.clone() });
            }
        }
    }
    ParticlePath {
        id,
        points,
        score_evals: score_norms.len(),
        score_norms,
        initial_position,
        final_position: x,
        status,
    }
}

fn run_levels<S: ScoreFn>(score: &S, cfg: &SamplerConfig, levels: &[f64], count: usize) -> Result<Vec<ParticlePath>> {
    cfg.validate()?;
    let noise = DiffusionNoise::new(cfg.diffusion_beta)?;
    let paths: Vec<ParticlePath> =
        (0..count).into_par_iter().map(|id| run_particle(score, cfg, levels, &noise, id)).collect();
    let diverged = paths.iter().filter(|p| p.status == Status::Diverged).count();
    if count > 0 && diverged == count {
        log::warn!("all {count} particles diverged");
    }
    Ok(paths)
}

/// Langevin dynamics at the first (largest) level of `cfg.schedule`.
///
/// Particle `i` draws from its own substream of `cfg.seed`, so results do not
/// depend on the number of worker threads.
pub fn ld_run<S: ScoreFn>(score: &S, cfg: &SamplerConfig, count: usize) -> Result<Vec<ParticlePath>> {
    run_levels(score, cfg, &cfg.schedule.sigmas[..1.min(cfg.schedule.len())], count)
}

/// Annealed Langevin dynamics over every level of `cfg.schedule`, each level
/// starting where the previous one ended.
pub fn ald_run<S: ScoreFn>(score: &S, cfg: &SamplerConfig, count: usize) -> Result<Vec<ParticlePath>> {
    run_levels(score, cfg, &cfg.schedule.sigmas, count)
}

pub fn diverged_count(paths: &[ParticlePath]) -> usize {
    paths.iter().filter(|p| p.status == Status::Diverged).count()
}

/// Final positions of the particles that did not diverge.
pub fn converged_endpoints(paths: &[ParticlePath]) -> Vec<Vec<f64>> {
    paths.iter().filter(|p| p.status == Status::Converged).map(|p| p.final_position.clone()).collect()
}

/// Forward noising chain `xᵢ = xᵢ₋₁ + √(σᵢ² − σᵢ₋₁²)·zᵢ` with σ₀ = 0 and
/// Gaussian increments. Returns `x0` followed by every state.
pub fn forward_chain<R: Rng + ?Sized>(x0: &[f64], sigmas: &[f64], rng: &mut R) -> Result<Vec<Vec<f64>>> {
    forward_chain_with(x0, sigmas, &DiffusionNoise::gaussian(), rng)
}

/// [`forward_chain`] with unit-variance increments of any shape.
pub fn forward_chain_with<R: Rng + ?Sized>(
    x0: &[f64],
    sigmas: &[f64],
    noise: &DiffusionNoise,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut prev = 0.0;
    for &s in sigmas {
        if !(s.is_finite() && s > prev) {
            return Err(Error::Schedule(format!(
                "forward chain needs strictly ascending positive sigmas, got {sigmas:?}"
            )));
        }
        prev = s;
    }
    let mut states = Vec::with_capacity(sigmas.len() + 1);
    states.push(x0.to_vec());
    let mut prev = 0.0;
    for &s in sigmas {
        let scale = (s * s - prev * prev).sqrt();
        let next = states.last().expect("non-empty").iter().map(|v| v + scale * noise.sample(rng)).collect();
        states.push(next);
        prev = s;
    }
    Ok(states)
}
