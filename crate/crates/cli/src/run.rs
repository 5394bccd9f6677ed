//! Training and evaluation runs shared by `train`, `eval` and `sweep`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use ssresnet::checkpoint::{load_checkpoint, Checkpoint};
use ssresnet::data::{Dataset, Manifest};
use ssresnet::metrics::MetricsReport;
use ssresnet::model::SSResNet;
use ssresnet::rng::RngState;
use ssresnet::trainer::{evaluate, TrainLog, Trainer};

use crate::config::RunConfig;
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.txt";
pub const INPUTS_FILE: &str = "inputs.txt";
pub const LOG_FILE: &str = "train_log.csv";
pub const EVAL_LOG_FILE: &str = "eval_log.csv";
pub const REPORT_FILE: &str = "report.txt";

/// SHA-256 over the manifest bytes and, in order, each listed path and the
/// bytes of its image.
pub fn manifest_digest(path: &Path) -> Result<String, CliError> {
    let manifest = Manifest::read(path)?;
    let mut h = Sha256::new();
    h.update(fs::read(path)?);
    for e in &manifest.entries {
        h.update(e.path.to_string_lossy().as_bytes());
        h.update(fs::read(manifest.resolve(e)).map_err(|err| CliError::Runtime(format!("{}: {err}", e.path.display())))?);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn file_digest(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// `inputs.txt`: one `role=path sha256` line per input.
pub fn write_inputs(out: &Path, inputs: &[(&str, String, String)]) -> Result<(), CliError> {
    let mut s = String::from("# role=path sha256\n");
    for (role, path, digest) in inputs {
        writeln!(s, "{role}={path} {digest}").expect("write to string");
    }
    fs::write(out.join(INPUTS_FILE), s)?;
    Ok(())
}

/// Text report at `path`, JSON next to it with a `.json` extension.
pub fn write_report(report: &MetricsReport, path: &Path) -> Result<PathBuf, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        return Err(CliError::Validation(format!("report path {} must not end in .json", path.display())));
    }
    let json = path.with_extension("json");
    fs::write(path, report.to_text())?;
    fs::write(&json, report.to_json())?;
    Ok(json)
}

pub struct RunData<'a> {
    pub labeled: &'a Dataset,
    pub unlabeled: &'a Dataset,
    pub test: &'a Dataset,
    pub class_names: Vec<String>,
}

/// Train into `out` and report on the test data. With `resume`, training
/// continues from the checkpoint and log already in `out`.
pub fn run_training(cfg: &RunConfig, data: &RunData<'_>, out: &Path, resume: bool) -> Result<MetricsReport, CliError> {
    fs::create_dir_all(out)?;
    if data.class_names.len() > cfg.model.num_classes {
        return Err(CliError::Validation(format!(
            "test manifest names {} classes but num_classes={}",
            data.class_names.len(),
            cfg.model.num_classes
        )));
    }
    if let Some(&label) = data.labeled.labels.iter().flatten().find(|&&l| l >= cfg.model.num_classes) {
        return Err(CliError::Validation(format!("label {label} out of range for num_classes={}", cfg.model.num_classes)));
    }
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    let checkpoint_path = out.join(&cfg.checkpoint_file);
    let mut train_cfg = cfg.train.clone();
    train_cfg.checkpoint_path = Some(checkpoint_path.clone());

    let (mut trainer, mut log) = if resume {
        let ck: Checkpoint<f32> = load_checkpoint(&checkpoint_path)?;
        if ck.model.config() != &cfg.model {
            return Err(CliError::Validation("checkpoint model does not match the configuration".into()));
        }
        let text = fs::read_to_string(out.join(LOG_FILE))?;
        let mut log = TrainLog::from_csv(&text).map_err(|e| CliError::Validation(format!("{LOG_FILE}: {e}")))?;
        log.records.truncate(ck.epochs_completed);
        (Trainer::from_checkpoint(ck, train_cfg)?, log)
    } else {
        let model = SSResNet::<f32>::build(&cfg.model, &RngState::new(cfg.train.seed)).map_err(|e| CliError::Validation(e.to_string()))?;
        (Trainer::new(model, train_cfg)?, TrainLog::default())
    };

    let mut eval_log = String::from("epoch,accuracy,macro_precision,macro_recall,macro_fscore\n");
    while trainer.epochs_completed() < cfg.train.num_epochs {
        let r = trainer.run_epoch(data.labeled, data.unlabeled)?;
        log.records.push(r);
        fs::write(out.join(LOG_FILE), log.to_csv())?;
        eprintln!(
            "epoch {}/{} lambda={:.4} wcel={:.5} msel={:.5} total={:.5} train_acc={:.4}",
            r.epoch, cfg.train.num_epochs, r.lambda, r.wcel, r.msel, r.total_loss, r.train_acc
        );
        if cfg.train.eval_every > 0 && r.epoch % cfg.train.eval_every == 0 {
            let rep = evaluate(&trainer.model, data.test, &data.class_names)?;
            writeln!(eval_log, "{},{},{},{},{}", r.epoch, rep.accuracy, rep.macro_precision, rep.macro_recall, rep.macro_fscore)
                .expect("write to string");
            fs::write(out.join(EVAL_LOG_FILE), &eval_log)?;
        }
    }
    fs::write(out.join(LOG_FILE), log.to_csv())?;
    ssresnet::checkpoint::save_checkpoint(&trainer.checkpoint(), &checkpoint_path)?;
    let report = evaluate(&trainer.model, data.test, &data.class_names)?;
    write_report(&report, &out.join(REPORT_FILE))?;
    Ok(report)
}

/// Evaluate a saved checkpoint on a labeled manifest.
pub fn run_eval(checkpoint: &Path, manifest: &Path) -> Result<MetricsReport, CliError> {
    let ck: Checkpoint<f32> = load_checkpoint(checkpoint)?;
    let manifest = Manifest::read(manifest)?;
    let data = ssresnet::data::load_dataset(&manifest, ck.model.config().input_size)?;
    if manifest.num_classes() > ck.model.config().num_classes {
        return Err(CliError::Validation(format!(
            "manifest names {} classes but the model predicts {}",
            manifest.num_classes(),
            ck.model.config().num_classes
        )));
    }
    Ok(evaluate(&ck.model, &data, &manifest.class_names)?)
}
