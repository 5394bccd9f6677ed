//! Semi-supervised residual network with a shared trunk and two heads.
//!
//! A shared convolutional trunk feeds a supervised path, trained with a
//! class-weighted cross-entropy on the labeled samples, and an unsupervised
//! path whose output is pulled toward the supervised logits by a mean-squared
//! consistency loss over every sample. Everything needed to train and
//! evaluate it lives here: a small reverse-mode autodiff engine, the model,
//! losses, trainer, checkpoints, data tooling and metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! bottom of this file name the `f32` instantiations used for training.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use data::Dataset;
pub use error::TensorError;
pub use losses::{ClassWeights, LambdaSchedule, RampShape};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use model::{ModelConfig, ParamGroup, SSResNet};
pub use optim::{AdamConfig, AdamState};
pub use rng::RngState;
pub use scalar::Scalar;
pub use tensor::{ops, Tensor};
pub use trainer::{evaluate, train, TrainConfig, TrainLog, Trainer};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Model = SSResNet<f32>;
