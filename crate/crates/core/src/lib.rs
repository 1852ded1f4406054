//! Heavy-tailed denoising score matching on low-dimensional data.
//!
//! Generalized-normal noise and scores, generalized-gamma norm models and
//! quantile-matched noise schedules, a small dense score network trained by
//! denoising score matching, (annealed) Langevin samplers with configurable
//! diffusion shape, and sample-quality metrics.

pub mod distributions;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod scorenet;
pub mod selftest;
pub mod specfun;
pub mod stats;

pub use distributions::{GeneralizedGamma, GeneralizedNormal, GnMethod, NormModel};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, RunRecord};
pub use metrics::{FeatureSet, MetricReport};
pub use sampler::{ParticlePath, SamplerConfig, ScoreFn, Status};
pub use schedule::NoiseSchedule;
pub use scorenet::{MixtureSpec, ScoreNetwork, TrainConfig};
