use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("invalid argument to {op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Self::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        Self::Invalid { op, detail: detail.into() }
    }
}

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("optimizer state does not match parameters: {0}")]
    StateMismatch(String),
    #[error("learning rate must be positive, got {0}")]
    LearningRate(f64),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid model config: {0}")]
    Model(String),
    #[error("invalid training config: {0}")]
    Train(String),
    #[error("invalid class weights: {0}")]
    ClassWeights(String),
    #[error("invalid lambda schedule: {0}")]
    Lambda(String),
}

#[derive(Debug, Error)]
pub enum LossError {
    #[error("label {label} at batch row {row} is outside [0, {classes})")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("labeled dataset is empty")]
    NoLabeledData,
    #[error("dataset shape {found:?} does not match model input {expected:?}")]
    InputShape { expected: [usize; 3], found: [usize; 3] },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint is malformed: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("class `{name}` has {count} sample(s); at least 2 are required to split")]
    ClassTooSmall { name: String, count: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },
    #[error("image `{entry}`: {detail}")]
    Image { entry: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("class {value} is outside [0, {classes})")]
    ClassOutOfRange { value: usize, classes: usize },
    #[error("truths and predictions differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("confusion matrix is empty")]
    Empty,
}
