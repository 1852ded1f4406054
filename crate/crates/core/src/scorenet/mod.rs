//! Dense score network, the denoising score-matching objective and analytic
//! mixture scores.

mod mixture;
mod network;
mod train;

pub use mixture::{analytic_mixture_score, MixtureSpec, DEFAULT_MODE_OFFSET, DEFAULT_MODE_STD};
pub use network::{DenseLayer, Gradients, ScoreNetwork, Scratch};
pub use train::{
    dsm_loss, regression_loss, train, train_seeded, DsmLoss, DsmNoise, Optimizer, TrainConfig, TrainOutcome,
};
