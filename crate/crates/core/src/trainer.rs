//! Joint training of the three parameter groups.
//!
//! Each epoch shuffles labeled and unlabeled samples together, and every
//! minibatch runs the shared trunk and both paths, computes the weighted
//! cross-entropy on its labeled rows and the consistency term on all rows,
//! combines them with the epoch's λ and takes one ADAM step over every
//! parameter.
//!
//! Randomness is drawn from substreams keyed by `(purpose, epoch, batch)`
//! under the configured seed, so a run resumed from a checkpoint at an epoch
//! boundary replays exactly the batches and dropout masks of an uninterrupted
//! run.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use crate::checkpoint::{save_checkpoint, Checkpoint};
use crate::data::Dataset;
use crate::error::{ConfigError, TrainError};
use crate::losses::{mse_consistency, total_loss, weighted_cross_entropy, ClassWeights, LambdaSchedule, RampShape};
use crate::metrics::{MetricsReport};
use crate::model::SSResNet;
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::rng::{tags, RngState};
use crate::scalar::Scalar;
use crate::tensor::{ops, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub minibatch_size: usize,
    pub num_epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub class_weights: ClassWeights,
    pub lambda: LambdaSchedule,
    pub adam: AdamConfig,
    /// Evaluate on the held-out set every this many epochs; 0 disables.
    pub eval_every: usize,
    /// Written after every epoch when set.
    pub checkpoint_path: Option<PathBuf>,
    /// Record wall-clock seconds per epoch. Off by default so logs are
    /// byte-reproducible; the column then holds 0.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            minibatch_size: 64,
            num_epochs: 30,
            learning_rate: 1e-3,
            seed: 0,
            class_weights: ClassWeights::uniform(3),
            lambda: LambdaSchedule { lambda_max: 1.0, ramp_epochs: 10, shape: RampShape::GaussianRampup },
            adam: AdamConfig::default(),
            eval_every: 0,
            checkpoint_path: None,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    /// Minibatch 256, 50 epochs, learning rate 0.1.
    pub fn paper() -> Self {
        Self { minibatch_size: 256, num_epochs: 50, learning_rate: 0.1, ..Self::default() }
    }

    pub fn validate(&self, num_classes: usize) -> Result<(), ConfigError> {
        if self.minibatch_size == 0 {
            return Err(ConfigError::Train("minibatch_size must be >= 1".into()));
        }
        if self.num_epochs == 0 {
            return Err(ConfigError::Train("num_epochs must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ConfigError::Train(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.class_weights.len() != num_classes {
            return Err(ConfigError::ClassWeights(format!(
                "{} weights for {num_classes} classes",
                self.class_weights.len()
            )));
        }
        LambdaSchedule::new(self.lambda.lambda_max, self.lambda.ramp_epochs, self.lambda.shape)?;
        Ok(())
    }
}

/// A minibatch; `labels[i]` is `None` for unlabeled rows.
#[derive(Debug, Clone)]
pub struct Batch<T: Scalar> {
    pub images: Tensor<T>,
    pub labels: Vec<Option<usize>>,
    /// Position in the concatenation `labeled ++ unlabeled`.
    pub sample_ids: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn labeled_mask(&self) -> Vec<bool> {
        self.labels.iter().map(Option::is_some).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Shuffle `labeled ++ unlabeled` with `rng` and cut it into batches of
/// `batch_size` (the last one may be shorter). Rows from `unlabeled` never
/// carry a label.
pub fn make_minibatches<T: Scalar>(
    labeled: &Dataset,
    unlabeled: &Dataset,
    batch_size: usize,
    rng: &mut RngState,
) -> Result<Vec<Batch<T>>, TrainError> {
    if !labeled.is_empty() && !unlabeled.is_empty() && labeled.shape() != unlabeled.shape() {
        return Err(TrainError::InputShape { expected: labeled.shape(), found: unlabeled.shape() });
    }
    let n_lab = labeled.len();
    let mut ids: Vec<usize> = (0..n_lab + unlabeled.len()).collect();
    rng.shuffle(&mut ids);
    let shape = if n_lab > 0 { labeled.shape() } else { unlabeled.shape() };
    let per = shape.iter().product::<usize>();
    ids.chunks(batch_size.max(1))
        .map(|chunk| {
            let mut data = Vec::with_capacity(chunk.len() * per);
            let mut labels = Vec::with_capacity(chunk.len());
            for &id in chunk {
                let (img, label) = if id < n_lab {
                    (labeled.image(id), labeled.labels[id])
                } else {
                    (unlabeled.image(id - n_lab), None)
                };
                data.extend(img.iter().map(|&v| T::from_f64_lossy(f64::from(v))));
                labels.push(label);
            }
            let images = Tensor::new(data, &[chunk.len(), shape[0], shape[1], shape[2]])?;
            Ok(Batch { images, labels, sample_ids: chunk.to_vec() })
        })
        .collect()
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub lambda: f64,
    pub wcel: f64,
    pub msel: f64,
    pub total_loss: f64,
    /// Accuracy of the training-mode logits on the labeled rows.
    pub train_acc: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    pub const HEADER: &'static str = "epoch,lambda,wcel,msel,total_loss,train_acc,seconds";

    /// CSV text; floats use the shortest representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::HEADER);
        for r in &self.records {
            writeln!(s, "{},{},{},{},{},{},{:.3}", r.epoch, r.lambda, r.wcel, r.msel, r.total_loss, r.train_acc, r.seconds)
                .expect("write to string");
        }
        s
    }

    /// Parse text written by [`TrainLog::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == Self::HEADER => {}
            other => return Err(format!("expected header `{}`, found `{}`", Self::HEADER, other.unwrap_or(""))),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = |what: &str| format!("line {}: bad {what}", i + 2);
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(format!("line {}: expected 7 fields, found {}", i + 2, f.len()));
            }
            let num = |j: usize, what: &str| f[j].parse::<f64>().map_err(|_| bad(what));
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad("epoch"))?,
                lambda: num(1, "lambda")?,
                wcel: num(2, "wcel")?,
                msel: num(3, "msel")?,
                total_loss: num(4, "total_loss")?,
                train_acc: num(5, "train_acc")?,
                seconds: num(6, "seconds")?,
            });
        }
        Ok(Self { records })
    }

    pub fn extend(&mut self, other: &TrainLog) {
        self.records.extend_from_slice(&other.records);
    }
}

/// Per-minibatch loss values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub wcel: f64,
    pub msel: f64,
    pub total: f64,
    pub labeled: usize,
    pub correct: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Training state: model, optimizer and the epochs done so far.
#[derive(Debug, Clone)]
pub struct Trainer<T: Scalar> {
    pub model: SSResNet<T>,
    pub optimizer: AdamState<T>,
    pub config: TrainConfig,
    pub log: TrainLog,
    /// Held-out reports from `eval_every`, keyed by one-based epoch.
    pub evaluations: Vec<(usize, MetricsReport)>,
    epochs_completed: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: SSResNet<T>, config: TrainConfig) -> Result<Self, TrainError> {
        let optimizer = AdamState::new(model.params().iter().map(|p| p.data.len()), config.adam);
        Self::resume(model, optimizer, 0, config)
    }

    /// Continue from a saved state; `epochs_completed` selects the next
    /// epoch's random substreams and λ.
    pub fn resume(model: SSResNet<T>, optimizer: AdamState<T>, epochs_completed: usize, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate(model.config().num_classes)?;
        if optimizer.first_moment.len() != model.params().len() {
            return Err(crate::error::OptimError::StateMismatch("optimizer does not match model".into()).into());
        }
        Ok(Self { model, optimizer, config, log: TrainLog::default(), evaluations: Vec::new(), epochs_completed })
    }

    pub fn from_checkpoint(ck: Checkpoint<T>, config: TrainConfig) -> Result<Self, TrainError> {
        Self::resume(ck.model, ck.optimizer, ck.epochs_completed, config)
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint { model: self.model.clone(), optimizer: self.optimizer.clone(), epochs_completed: self.epochs_completed }
    }

    /// Forward, loss, backward and one ADAM update on a single batch.
    pub fn train_step(&mut self, batch: &Batch<T>, lambda: f64, dropout: &RngState) -> Result<StepStats, TrainError> {
        let model = &self.model;
        let mut pass = model.begin_pass(true, dropout);
        let z = model.shared_forward(&mut pass, &batch.images)?;
        let z_sup = model.supervised_forward(&mut pass, &z)?;
        let z_unsup = model.unsupervised_forward(&mut pass, &z)?;
        let wcel = weighted_cross_entropy(&z_sup, &batch.labels, &self.config.class_weights)?;
        let msel = if model.config().consistency_on_probabilities {
            mse_consistency(&ops::softmax(&z_sup)?, &ops::softmax(&z_unsup)?)?
        } else {
            mse_consistency(&z_sup, &z_unsup)?
        };
        let loss = total_loss(&wcel, &msel, T::from_f64_lossy(lambda))?;

        let c = model.config().num_classes;
        let mut stats = StepStats {
            wcel: wcel.item().to_f64_lossy(),
            msel: msel.item().to_f64_lossy(),
            total: loss.item().to_f64_lossy(),
            labeled: 0,
            correct: 0,
        };
        for (row, label) in z_sup.data().chunks(c).zip(&batch.labels) {
            if let Some(y) = *label {
                stats.labeled += 1;
                stats.correct += usize::from(argmax(row) == y);
            }
        }
        if ![stats.wcel, stats.msel, stats.total].iter().all(|v| v.is_finite()) {
            return Err(TrainError::NonFiniteLoss { epoch: self.epochs_completed + 1, batch: 0 });
        }

        loss.backward()?;
        let grads = pass.grads();
        self.model.commit(pass);
        let names: Vec<String> = self.model.params().iter().map(|p| p.name.clone()).collect();
        let names: Vec<&str> = names.iter().map(String::as_str).collect();
        let grads: Vec<&[T]> = grads.iter().map(Vec::as_slice).collect();
        let mut params: Vec<&mut [T]> = self.model.params_mut().iter_mut().map(|p| p.data.as_mut_slice()).collect();
        adam_step(&mut params, &grads, &names, &mut self.optimizer, T::from_f64_lossy(self.config.learning_rate))?;
        Ok(stats)
    }

    /// Run the next epoch and append its record to the log.
    pub fn run_epoch(&mut self, labeled: &Dataset, unlabeled: &Dataset) -> Result<EpochRecord, TrainError> {
        if labeled.is_empty() {
            return Err(TrainError::NoLabeledData);
        }
        let expected = self.model.config().input_shape();
        for ds in [labeled, unlabeled] {
            if !ds.is_empty() && ds.shape() != expected {
                return Err(TrainError::InputShape { expected, found: ds.shape() });
            }
        }
        let start = Instant::now();
        let epoch = self.epochs_completed;
        let root = RngState::new(self.config.seed);
        let lambda = self.config.lambda.lambda_at(epoch);
        let batches = make_minibatches::<T>(labeled, unlabeled, self.config.minibatch_size, &mut root.path(&[tags::SHUFFLE, epoch as u64]))?;
        let (mut wcel, mut msel, mut total) = (0.0, 0.0, 0.0);
        let (mut labeled_rows, mut correct) = (0, 0);
        for (i, batch) in batches.iter().enumerate() {
            let dropout = root.path(&[tags::DROPOUT, epoch as u64, i as u64]);
            let s = self.train_step(batch, lambda, &dropout).map_err(|e| match e {
                TrainError::NonFiniteLoss { epoch, .. } => TrainError::NonFiniteLoss { epoch, batch: i },
                other => other,
            })?;
            wcel += s.wcel;
            msel += s.msel;
            total += s.total;
            labeled_rows += s.labeled;
            correct += s.correct;
        }
        let n = batches.len() as f64;
        self.epochs_completed += 1;
        let record = EpochRecord {
            epoch: self.epochs_completed,
            lambda,
            wcel: wcel / n,
            msel: msel / n,
            total_loss: total / n,
            train_acc: if labeled_rows > 0 { correct as f64 / labeled_rows as f64 } else { 0.0 },
            seconds: if self.config.log_wall_time { start.elapsed().as_secs_f64() } else { 0.0 },
        };
        self.log.records.push(record);
        if let Some(path) = &self.config.checkpoint_path {
            save_checkpoint(&self.checkpoint(), path)?;
        }
        Ok(record)
    }

    /// Run the remaining epochs up to `num_epochs`, evaluating on `held_out`
    /// every `eval_every` epochs when given.
    pub fn run(&mut self, labeled: &Dataset, unlabeled: &Dataset, held_out: Option<(&Dataset, &[String])>) -> Result<(), TrainError> {
        while self.epochs_completed < self.config.num_epochs {
            self.run_epoch(labeled, unlabeled)?;
            if let (Some((ds, names)), true) = (held_out, self.config.eval_every > 0) {
                if self.epochs_completed.is_multiple_of(self.config.eval_every) {
                    let report = evaluate(&self.model, ds, names)?;
                    self.evaluations.push((self.epochs_completed, report));
                }
            }
        }
        Ok(())
    }
}

/// Train a freshly built model for `config.num_epochs` epochs.
pub fn train<T: Scalar>(
    model: SSResNet<T>,
    labeled: &Dataset,
    unlabeled: &Dataset,
    config: &TrainConfig,
) -> Result<(SSResNet<T>, TrainLog), TrainError> {
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(labeled, unlabeled, None)?;
    Ok((trainer.model, trainer.log))
}

/// Inference-mode predictions through the shared trunk and supervised path.
pub fn predict<T: Scalar>(model: &SSResNet<T>, dataset: &Dataset) -> Result<Vec<usize>, TrainError> {
    const CHUNK: usize = 256;
    let c = model.config().num_classes;
    let ids: Vec<usize> = (0..dataset.len()).collect();
    let mut preds = Vec::with_capacity(dataset.len());
    for chunk in ids.chunks(CHUNK) {
        let logits = model.predict_logits(&dataset.batch_tensor::<T>(chunk)?)?;
        preds.extend(logits.data().chunks(c).map(argmax));
    }
    Ok(preds)
}

/// Confusion matrix and macro metrics of the supervised path on a labeled set.
pub fn evaluate<T: Scalar>(model: &SSResNet<T>, dataset: &Dataset, class_names: &[String]) -> Result<MetricsReport, TrainError> {
    let truths: Vec<usize> = dataset
        .labels
        .iter()
        .map(|l| l.ok_or_else(|| ConfigError::Train("evaluation dataset must be fully labeled".into())))
        .collect::<Result<_, _>>()?;
    if dataset.is_empty() {
        return Err(ConfigError::Train("evaluation dataset is empty".into()).into());
    }
    let expected = model.config().input_shape();
    if dataset.shape() != expected {
        return Err(TrainError::InputShape { expected, found: dataset.shape() });
    }
    let preds = predict(model, dataset)?;
    let mut names = class_names.to_vec();
    names.resize_with(model.config().num_classes, String::new);
    for (i, n) in names.iter_mut().enumerate() {
        if n.is_empty() {
            *n = format!("class{i}");
        }
    }
    MetricsReport::from_predictions(&truths, &preds, names)
        .map_err(|e| ConfigError::Train(format!("evaluation failed: {e}")).into())
}
