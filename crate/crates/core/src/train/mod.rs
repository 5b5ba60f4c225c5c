//! Losses, the training loops and iterative inference.

pub mod config;
pub mod denoise;
pub mod loss;
pub mod trainer;

pub use config::{DataLoss, TrainConfig, TrainMode};
pub use denoise::{denoise, denoise_trace, denoise_with, remove_low_frequency, DenoiseConfig, DenoiseReport};
pub use loss::{annealed_l0_grad, annealed_l0_loss, gamma_at, repulsion_term, repulsion_with_grad};
pub use trainer::{
    mix_seed, nearest_targets, train_supervised, train_supervised_with, train_unsupervised, train_unsupervised_with,
    CloudData, EpochRecord, TrainReport, Trainer,
};
