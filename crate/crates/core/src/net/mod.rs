//! Reverse-mode differentiation, Monte Carlo convolution layers and the
//! encoder-decoder built from them.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use conv::{mc_conv, ConvGeometry, KernelIds, KernelMlp};
pub use model::{network_forward, ArchSpec, LevelSpec, Model, Pyramid};
pub use params::ModelParams;
pub use tape::{GradTape, Gradients, LinearIds, NodeId};
pub use tensor::Tensor;
pub use gradcheck::{check_gradients, GradCheckReport};
