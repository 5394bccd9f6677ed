//! Training objective: class-weighted cross-entropy on labeled rows, a
//! mean-squared consistency term between the two paths on every row, their
//! λ-weighted sum, and the λ ramp.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, LossError};
use crate::scalar::Scalar;
use crate::tensor::{ops, Tensor};

/// One positive weight per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, ConfigError> {
        if weights.len() < 2 {
            return Err(ConfigError::ClassWeights(format!("need at least 2 classes, got {}", weights.len())));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(ConfigError::ClassWeights(format!("weights must be finite and > 0, got {w}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy with the weight of `class` replaced.
    pub fn with(&self, class: usize, weight: f64) -> Result<Self, ConfigError> {
        let mut w = self.0.clone();
        let slot = w
            .get_mut(class)
            .ok_or_else(|| ConfigError::ClassWeights(format!("class {class} out of range")))?;
        *slot = weight;
        Self::new(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RampShape {
    GaussianRampup,
    Constant,
}

impl std::str::FromStr for RampShape {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian_rampup" => Ok(Self::GaussianRampup),
            "constant" => Ok(Self::Constant),
            other => Err(ConfigError::Lambda(format!("unknown lambda shape `{other}`"))),
        }
    }
}

impl std::fmt::Display for RampShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::GaussianRampup => "gaussian_rampup",
            Self::Constant => "constant",
        })
    }
}

/// Weight of the consistency term as a function of the epoch index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub lambda_max: f64,
    pub ramp_epochs: usize,
    pub shape: RampShape,
}

impl LambdaSchedule {
    pub fn new(lambda_max: f64, ramp_epochs: usize, shape: RampShape) -> Result<Self, ConfigError> {
        if !(lambda_max.is_finite() && lambda_max >= 0.0) {
            return Err(ConfigError::Lambda(format!("lambda_max must be finite and >= 0, got {lambda_max}")));
        }
        if ramp_epochs == 0 {
            return Err(ConfigError::Lambda("ramp_epochs must be positive".into()));
        }
        Ok(Self { lambda_max, ramp_epochs, shape })
    }

    /// `lambda_max * exp(-5 (1 - min(t / T, 1))^2)` for the Gaussian ramp,
    /// `lambda_max` for the constant schedule. `epoch` is zero-based.
    pub fn lambda_at(&self, epoch: usize) -> f64 {
        match self.shape {
            RampShape::Constant => self.lambda_max,
            RampShape::GaussianRampup => {
                let p = (epoch as f64 / self.ramp_epochs as f64).min(1.0);
                self.lambda_max * (-5.0 * (1.0 - p) * (1.0 - p)).exp()
            }
        }
    }
}

/// `-(1/B) Σ_{labeled i} w[y_i] · log softmax(z_sup_i)[y_i]`, where `B` counts
/// every row of the batch. A batch without labels yields a constant zero that
/// carries no gradient.
pub fn weighted_cross_entropy<T: Scalar>(
    z_sup: &Tensor<T>,
    labels: &[Option<usize>],
    weights: &ClassWeights,
) -> Result<Tensor<T>, LossError> {
    let (b, c) = match *z_sup.shape() {
        [b, c] => (b, c),
        _ => return Err(LossError::Shape(format!("logits must be [B, C], got {:?}", z_sup.shape()))),
    };
    if labels.len() != b {
        return Err(LossError::Shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if weights.len() != c {
        return Err(LossError::Shape(format!("{} class weights for {c} classes", weights.len())));
    }
    let mut picks = Vec::new();
    for (row, label) in labels.iter().enumerate() {
        if let Some(y) = *label {
            if y >= c {
                return Err(LossError::LabelOutOfRange { row, label: y, classes: c });
            }
            picks.push((row, y, T::from_f64_lossy(weights.as_slice()[y])));
        }
    }
    if picks.is_empty() {
        return Ok(Tensor::scalar(T::zero()));
    }
    let log_probs = ops::log_softmax(z_sup)?;
    let picked = ops::pick_weighted_sum(&log_probs, &picks)?;
    Ok(ops::scale(&picked, -T::one() / T::from_f64_lossy(b as f64)))
}

/// `(1 / (C·B)) Σ_i ||z_sup_i - z_unsup_i||²` over every row.
pub fn mse_consistency<T: Scalar>(z_sup: &Tensor<T>, z_unsup: &Tensor<T>) -> Result<Tensor<T>, LossError> {
    if z_sup.shape() != z_unsup.shape() {
        return Err(LossError::Shape(format!("{:?} vs {:?}", z_sup.shape(), z_unsup.shape())));
    }
    let (b, c) = match *z_sup.shape() {
        [b, c] => (b, c),
        _ => return Err(LossError::Shape(format!("outputs must be [B, C], got {:?}", z_sup.shape()))),
    };
    let diff = ops::sub(z_sup, z_unsup)?;
    let total = ops::sum(&ops::square(&diff));
    Ok(ops::scale(&total, T::one() / T::from_f64_lossy((b * c) as f64)))
}

/// `wcel + lambda · msel`.
pub fn total_loss<T: Scalar>(wcel: &Tensor<T>, msel: &Tensor<T>, lambda: T) -> Result<Tensor<T>, LossError> {
    Ok(ops::add(wcel, &ops::scale(msel, lambda))?)
}
