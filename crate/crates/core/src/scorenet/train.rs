use super::network::{Gradients, ScoreNetwork};
use crate::distributions::{gn_score_clamped, unit_variance_alpha, GeneralizedNormal, GnMethod};
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::schedule::NoiseSchedule;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    /// Plain SGD with a fixed learning rate.
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![16, 16]
}
fn default_batch() -> usize {
    256
}
fn default_steps() -> usize {
    20_000
}
fn default_lr() -> f64 {
    1e-3
}
fn default_weight_exponent() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: NoiseSchedule,
    /// Shape of the generalized-normal training noise (2 = Gaussian DSM).
    pub beta_noise: f64,
    /// Noise scale at σ = 1. `None` picks the unit-variance scale for
    /// `beta_noise`, which is √2 for the Gaussian.
    #[serde(default)]
    pub alpha_unit: Option<f64>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// λ(σ) = σ^exponent.
    #[serde(default = "default_weight_exponent")]
    pub loss_weight_exponent: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(schedule: NoiseSchedule, beta_noise: f64) -> Self {
        Self {
            schedule,
            beta_noise,
            alpha_unit: None,
            hidden: default_hidden(),
            batch_size: default_batch(),
            steps: default_steps(),
            learning_rate: default_lr(),
            loss_weight_exponent: default_weight_exponent(),
            optimizer: Optimizer::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("batch size and step count must be >= 1".into()));
        }
        if !(self.beta_noise.is_finite() && self.beta_noise > 0.0) {
            return Err(Error::Config(format!("beta_noise must be > 0, got {}", self.beta_noise)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if let Some(a) = self.alpha_unit {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Config(format!("alpha_unit must be > 0, got {a}")));
            }
        }
        Ok(())
    }

    pub fn noise(&self) -> Result<DsmNoise> {
        Ok(DsmNoise {
            beta: self.beta_noise,
            alpha_unit: match self.alpha_unit {
                Some(a) => a,
                None => unit_variance_alpha(self.beta_noise)?,
            },
            weight_exponent: self.loss_weight_exponent,
        })
    }
}

/// Noise kernel and loss weighting for one DSM objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsmNoise {
    pub beta: f64,
    pub alpha_unit: f64,
    pub weight_exponent: f64,
}

impl DsmNoise {
    pub fn gaussian() -> Self {
        Self { beta: 2.0, alpha_unit: std::f64::consts::SQRT_2, weight_exponent: 2.0 }
    }

    pub fn weight(&self, sigma: f64) -> f64 {
        sigma.powf(self.weight_exponent)
    }
}

#[derive(Debug, Clone)]
pub struct DsmLoss {
    pub loss: f64,
    pub grads: Gradients,
}

/// `λ(σ) · mean ½‖s_θ(x̃, log σ) - t‖²` over paired inputs and targets,
/// with exact parameter gradients.
pub fn regression_loss(
    net: &ScoreNetwork,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    sigma: f64,
    weight: f64,
) -> Result<DsmLoss> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::Dimension { expected: inputs.len(), got: targets.len() });
    }
    let d = net.data_dim();
    let mut flat_in = Vec::with_capacity(inputs.len() * d);
    let mut flat_t = Vec::with_capacity(inputs.len() * d);
    for (x, t) in inputs.iter().zip(targets) {
        if x.len() != d || t.len() != d {
            return Err(Error::Dimension { expected: d, got: x.len().max(t.len()) });
        }
        flat_in.extend_from_slice(x);
        flat_t.extend_from_slice(t);
    }
    let mut grads = net.gradients();
    let loss = flat_loss(net, &flat_in, &flat_t, sigma.ln(), weight, &mut grads, &mut Vec::new());
    Ok(DsmLoss { loss, grads })
}

/// Core of the objective on flat row-major buffers; gradients are overwritten.
fn flat_loss(
    net: &ScoreNetwork,
    inputs: &[f64],
    targets: &[f64],
    log_sigma: f64,
    weight: f64,
    grads: &mut Gradients,
    d_out: &mut Vec<f64>,
) -> f64 {
    let d = net.data_dim();
    let batch = inputs.len() / d;
    let scale = weight / batch as f64;
    grads.zero();
    d_out.resize(d, 0.0);
    let mut scratch = net.scratch();
    let mut total = 0.0;
    for (x, t) in inputs.chunks_exact(d).zip(targets.chunks_exact(d)) {
        let out = net.forward_with(x, log_sigma, &mut scratch);
        for ((g, o), ti) in d_out.iter_mut().zip(out).zip(t) {
            let diff = o - ti;
            total += 0.5 * diff * diff;
            *g = scale * diff;
        }
        net.backward(&mut scratch, d_out, grads);
    }
    total * scale
}

/// Perturb each coordinate with `GN(0, σ·α_unit, β)` noise and build the
/// conditional-score targets for a clean batch.
fn noisy_batch<'a, R, I>(
    clean: I,
    sigma: f64,
    noise: &DsmNoise,
    rng: &mut R,
    inputs: &mut Vec<f64>,
    targets: &mut Vec<f64>,
) where
    R: Rng + ?Sized,
    I: IntoIterator<Item = &'a [f64]>,
{
    let alpha = sigma * noise.alpha_unit;
    let dist = GeneralizedNormal::new(0.0, alpha, noise.beta).expect("validated noise parameters");
    inputs.clear();
    targets.clear();
    for x in clean {
        for &xi in x {
            let xt = xi + dist.sample_one(rng, GnMethod::GammaPower);
            inputs.push(xt);
            targets.push(gn_score_clamped(xt, xi, alpha, noise.beta));
        }
    }
}

/// Denoising score-matching loss and gradients for one noise level.
pub fn dsm_loss<R: Rng + ?Sized>(
    net: &ScoreNetwork,
    batch: &[Vec<f64>],
    sigma: f64,
    noise: &DsmNoise,
    rng: &mut R,
) -> Result<DsmLoss> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if let Some(x) = batch.iter().find(|x| x.len() != net.data_dim()) {
        return Err(Error::Dimension { expected: net.data_dim(), got: x.len() });
    }
    GeneralizedNormal::new(0.0, sigma * noise.alpha_unit, noise.beta)?;
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    noisy_batch(batch.iter().map(Vec::as_slice), sigma, noise, rng, &mut inputs, &mut targets);
    let mut grads = net.gradients();
    let loss = flat_loss(net, &inputs, &targets, sigma.ln(), noise.weight(sigma), &mut grads, &mut Vec::new());
    Ok(DsmLoss { loss, grads })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: ScoreNetwork,
    /// Weighted loss at every step.
    pub losses: Vec<f64>,
    /// Schedule index used at every step.
    pub levels: Vec<usize>,
}

impl TrainOutcome {
    /// Mean loss over the first and last 10% of steps.
    pub fn decile_means(&self) -> (f64, f64) {
        let k = (self.losses.len() / 10).max(1);
        let first = crate::stats::mean(&self.losses[..k]);
        let last = crate::stats::mean(&self.losses[self.losses.len() - k..]);
        (first, last)
    }

    /// Mean loss per schedule level over the trailing `fraction` of steps.
    pub fn tail_level_losses(&self, levels: usize, fraction: f64) -> Vec<f64> {
        let start = ((1.0 - fraction) * self.losses.len() as f64) as usize;
        let mut sum = vec![0.0; levels];
        let mut count = vec![0usize; levels];
        for (l, &lvl) in self.losses[start..].iter().zip(&self.levels[start..]) {
            sum[lvl] += l;
            count[lvl] += 1;
        }
        sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { f64::NAN }).collect()
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

/// Train a fresh network on `data` with multi-level DSM.
///
/// Every step draws one level uniformly from the schedule and a minibatch
/// uniformly with replacement from `data`. The initial weights are the first
/// draws from `rng`.
pub fn train<R: Rng + ?Sized>(data: &[Vec<f64>], cfg: &TrainConfig, rng: &mut R) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dim = data.first().map(Vec::len).ok_or_else(|| Error::Config("training data is empty".into()))?;
    if data.iter().any(|x| x.len() != dim) {
        return Err(Error::Config("training points differ in dimension".into()));
    }
    let noise = cfg.noise()?;
    let mut net = ScoreNetwork::new(dim, &cfg.hidden, rng)?;
    let mut grads = net.gradients();
    let mut d_out = Vec::new();
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => {
            Some(AdamState { m: vec![0.0; net.param_count()], v: vec![0.0; net.param_count()], t: 0 })
        }
        Optimizer::Sgd => None,
    };
    let sigmas = &cfg.schedule.sigmas;
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut levels = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let level = rng.random_range(0..sigmas.len());
        let sigma = sigmas[level];
        let picks: Vec<usize> = (0..cfg.batch_size).map(|_| rng.random_range(0..data.len())).collect();
        noisy_batch(picks.iter().map(|&i| data[i].as_slice()), sigma, &noise, rng, &mut inputs, &mut targets);
        let loss = flat_loss(&net, &inputs, &targets, sigma.ln(), noise.weight(sigma), &mut grads, &mut d_out);
        if !loss.is_finite() {
            return Err(Error::Training { step, sigma, reason: format!("loss is {loss}") });
        }
        match (&cfg.optimizer, adam.as_mut()) {
            (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
                state.t += 1;
                let g = grads.flatten();
                let mut p = net.params();
                let c1 = 1.0 - beta1.powi(state.t);
                let c2 = 1.0 - beta2.powi(state.t);
                for i in 0..p.len() {
                    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
                    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
                    p[i] -= cfg.learning_rate * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + eps);
                }
                net.set_params(&p)?;
            }
            _ => net.sgd_step(&grads, cfg.learning_rate),
        }
        if !net.all_finite() {
            return Err(Error::Training { step, sigma, reason: "non-finite parameter".into() });
        }
        losses.push(loss);
        levels.push(level);
    }
    log::debug!("trained {} steps, final loss {:?}", cfg.steps, losses.last());
    Ok(TrainOutcome { network: net, losses, levels })
}

/// [`train`] with a generator seeded from `cfg.seed`.
pub fn train_seeded(data: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(data, cfg, &mut seeded(cfg.seed))
}
