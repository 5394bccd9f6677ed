//! Flat `key=value` run configuration.
//!
//! Blank lines and text after `#` are ignored. `preset` is applied first,
//! every other key then overrides the preset's value. Unknown and repeated
//! keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use ssresnet::losses::{ClassWeights, LambdaSchedule, RampShape};
use ssresnet::model::ModelConfig;
use ssresnet::trainer::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Desk-scale defaults.
    Desk,
    /// Minibatch 256, 50 epochs, learning rate 0.1.
    Paper,
    /// Desk defaults with the consistency term switched off.
    Supervised,
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            "supervised" => Ok(Self::Supervised),
            other => Err(CliError::Validation(format!("unknown preset `{other}` (expected desk, paper or supervised)"))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Self::Desk => "desk",
            Self::Paper => "paper",
            Self::Supervised => "supervised",
        }
    }

    fn train(self) -> TrainConfig {
        match self {
            Self::Desk => TrainConfig::default(),
            Self::Paper => TrainConfig::paper(),
            Self::Supervised => TrainConfig {
                lambda: LambdaSchedule { lambda_max: 0.0, ramp_epochs: 10, shape: RampShape::Constant },
                ..TrainConfig::default()
            },
        }
    }
}

/// Every accepted key with its desk default.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "desk"),
    ("image_size", "32"),
    ("input_channels", "1"),
    ("stem_channels", "16"),
    ("shared_blocks", "2"),
    ("sup_blocks", "2"),
    ("unsup_blocks", "2"),
    ("path_channels", "32"),
    ("num_classes", "3"),
    ("dropout_rate", "0.1"),
    ("consistency_on_probabilities", "false"),
    ("minibatch_size", "64"),
    ("num_epochs", "30"),
    ("learning_rate", "0.001"),
    ("seed", "0"),
    ("class_weights", "1 per class"),
    ("lambda_max", "1"),
    ("lambda_ramp_epochs", "10"),
    ("lambda_shape", "gaussian_rampup"),
    ("adam_beta1", "0.9"),
    ("adam_beta2", "0.999"),
    ("adam_epsilon", "1e-8"),
    ("eval_every", "0"),
    ("checkpoint_path", "checkpoint.ssrn"),
    ("log_wall_time", "false"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Relative to the run directory.
    pub checkpoint_file: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_preset(Preset::Desk)
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V, CliError> {
    value.parse().map_err(|_| CliError::Validation(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Validation(format!("invalid value `{value}` for `{key}` (expected true or false)"))),
    }
}

pub fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value.split(',').map(|v| parse::<f64>(key, v.trim())).collect()
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        Self { preset, model: ModelConfig::default(), train: preset.train(), checkpoint_file: "checkpoint.ssrn".into() }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut pairs: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key=value, got `{line}`", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(CliError::Validation(format!("config line {}: unknown key `{key}`", i + 1)));
            }
            if pairs.iter().any(|(_, k, _)| *k == key) {
                return Err(CliError::Validation(format!("config line {}: key `{key}` given twice", i + 1)));
            }
            pairs.push((i + 1, key, value));
        }
        let preset = match pairs.iter().find(|(_, k, _)| *k == "preset") {
            Some((_, _, v)) => v.parse()?,
            None => Preset::Desk,
        };
        let mut cfg = Self::from_preset(preset);
        let mut weights = None;
        for &(line, key, value) in &pairs {
            cfg.set(key, value, &mut weights)
                .map_err(|e| CliError::Validation(format!("config line {line}: {}", e.message())))?;
        }
        cfg.train.class_weights = match weights {
            Some(w) => ClassWeights::new(w).map_err(|e| CliError::Validation(e.to_string()))?,
            None => ClassWeights::uniform(cfg.model.num_classes),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, weights: &mut Option<Vec<f64>>) -> Result<(), CliError> {
        let (m, t) = (&mut self.model, &mut self.train);
        match key {
            "preset" => {}
            "image_size" => m.input_size = parse(key, value)?,
            "input_channels" => m.input_channels = parse(key, value)?,
            "stem_channels" => m.stem_channels = parse(key, value)?,
            "shared_blocks" => m.n_shared_blocks = parse(key, value)?,
            "sup_blocks" => m.m_sup_blocks = parse(key, value)?,
            "unsup_blocks" => m.k_unsup_blocks = parse(key, value)?,
            "path_channels" => m.path_channels = parse(key, value)?,
            "num_classes" => m.num_classes = parse(key, value)?,
            "dropout_rate" => m.dropout_rate = parse(key, value)?,
            "consistency_on_probabilities" => m.consistency_on_probabilities = parse_bool(key, value)?,
            "minibatch_size" => t.minibatch_size = parse(key, value)?,
            "num_epochs" => t.num_epochs = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "class_weights" => *weights = Some(parse_list(key, value)?),
            "lambda_max" => t.lambda.lambda_max = parse(key, value)?,
            "lambda_ramp_epochs" => t.lambda.ramp_epochs = parse(key, value)?,
            "lambda_shape" => t.lambda.shape = value.parse().map_err(|e: ssresnet::error::ConfigError| CliError::Validation(e.to_string()))?,
            "adam_beta1" => t.adam.beta1 = parse(key, value)?,
            "adam_beta2" => t.adam.beta2 = parse(key, value)?,
            "adam_epsilon" => t.adam.epsilon = parse(key, value)?,
            "eval_every" => t.eval_every = parse(key, value)?,
            "checkpoint_path" => {
                if value.is_empty() {
                    return Err(CliError::Validation("checkpoint_path must not be empty".into()));
                }
                self.checkpoint_file = value.to_string();
            }
            "log_wall_time" => t.log_wall_time = parse_bool(key, value)?,
            other => return Err(CliError::Validation(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.train.validate(self.model.num_classes).map_err(|e| CliError::Validation(e.to_string()))?;
        let a = &self.train.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return Err(CliError::Validation("adam_beta1/adam_beta2 must lie in [0, 1) and adam_epsilon must be > 0".into()));
        }
        Ok(())
    }

    /// The effective configuration, one line per key; parsing it yields the
    /// same configuration.
    pub fn to_text(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        let weights: Vec<String> = t.class_weights.as_slice().iter().map(f64::to_string).collect();
        let mut s = String::from("# effective configuration\n");
        let values: [(&str, String); 25] = [
            ("preset", self.preset.name().into()),
            ("image_size", m.input_size.to_string()),
            ("input_channels", m.input_channels.to_string()),
            ("stem_channels", m.stem_channels.to_string()),
            ("shared_blocks", m.n_shared_blocks.to_string()),
            ("sup_blocks", m.m_sup_blocks.to_string()),
            ("unsup_blocks", m.k_unsup_blocks.to_string()),
            ("path_channels", m.path_channels.to_string()),
            ("num_classes", m.num_classes.to_string()),
            ("dropout_rate", m.dropout_rate.to_string()),
            ("consistency_on_probabilities", m.consistency_on_probabilities.to_string()),
            ("minibatch_size", t.minibatch_size.to_string()),
            ("num_epochs", t.num_epochs.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("seed", t.seed.to_string()),
            ("class_weights", weights.join(",")),
            ("lambda_max", t.lambda.lambda_max.to_string()),
            ("lambda_ramp_epochs", t.lambda.ramp_epochs.to_string()),
            ("lambda_shape", t.lambda.shape.to_string()),
            ("adam_beta1", t.adam.beta1.to_string()),
            ("adam_beta2", t.adam.beta2.to_string()),
            ("adam_epsilon", t.adam.epsilon.to_string()),
            ("eval_every", t.eval_every.to_string()),
            ("checkpoint_path", self.checkpoint_file.clone()),
            ("log_wall_time", t.log_wall_time.to_string()),
        ];
        for (k, v) in values {
            writeln!(s, "{k}={v}").expect("write to string");
        }
        s
    }
}
