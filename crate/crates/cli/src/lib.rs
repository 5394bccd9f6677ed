//! Command implementations behind the `ssresnet` binary.
//!
//! Every command writes only into its output directory (or report path), and
//! identical inputs give byte-identical files.

pub mod config;
pub mod error;
pub mod run;
pub mod sweep;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ssresnet::data::{generate_synthetic, label_ratio_subset, load_dataset, stratified_split, Manifest, SplitSpec, SynthSpec};
use ssresnet::metrics::MetricsReport;

pub use config::RunConfig;
pub use error::CliError;

use run::{file_digest, manifest_digest, write_inputs, RunData};

pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Validation(format!("config {}: {e}", p.display())))?;
            RunConfig::parse(&text)
        }
        None => Ok(RunConfig::default()),
    }
}

/// Write the synthetic images and `manifest.csv` under `out`.
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<Manifest, CliError> {
    let set = generate_synthetic(spec)?;
    Ok(set.write(out)?)
}

/// `train.csv`, `test.csv` and a per-class count table `splits.txt`.
pub fn cmd_split(manifest: &Path, spec: &SplitSpec, out: &Path) -> Result<(Manifest, Manifest), CliError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(CliError::Validation(format!("train fraction {} outside (0, 1)", spec.train_fraction)));
    }
    let m = Manifest::read(manifest)?;
    let (train, test) = stratified_split(&m, spec)?;
    fs::create_dir_all(out)?;
    train.write(&out.join("train.csv"))?;
    test.write(&out.join("test.csv"))?;
    let (total, tr, te) = (m.class_counts(), train.class_counts(), test.class_counts());
    let mut s = format!("train_fraction={}\nseed={}\nclass,total,train,test\n", spec.train_fraction, spec.seed);
    for (c, n) in total.iter().enumerate() {
        let get = |v: &[usize]| v.get(c).copied().unwrap_or(0);
        writeln!(s, "{},{},{},{}", m.class_name(c), n, get(&tr), get(&te)).expect("write to string");
    }
    let unlabeled = m.entries.iter().filter(|e| e.label.is_none()).count();
    if unlabeled > 0 {
        writeln!(s, "unlabeled,{unlabeled},-,-").expect("write to string");
    }
    fs::write(out.join("splits.txt"), s)?;
    Ok((train, test))
}

/// `labeled.csv` and `unlabeled.csv`.
pub fn cmd_subset(manifest: &Path, ratio: f64, seed: u64, out: &Path) -> Result<(Manifest, Manifest), CliError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(CliError::Validation(format!("ratio {ratio} outside (0, 1]")));
    }
    let m = Manifest::read(manifest)?;
    let (lab, unlab) = label_ratio_subset(&m, ratio, seed)?;
    fs::create_dir_all(out)?;
    lab.write(&out.join("labeled.csv"))?;
    unlab.write(&out.join("unlabeled.csv"))?;
    Ok((lab, unlab))
}

pub struct TrainArgs<'a> {
    pub config: Option<&'a Path>,
    pub labeled: &'a Path,
    pub unlabeled: Option<&'a Path>,
    pub test: &'a Path,
    pub out: &'a Path,
    pub resume: bool,
}

/// Train, then write the checkpoint, log, test report, echoed config and
/// input digests into `out`.
pub fn cmd_train(args: &TrainArgs<'_>) -> Result<MetricsReport, CliError> {
    let cfg = load_config(args.config)?;
    let size = cfg.model.input_size;
    let lab_m = Manifest::read(args.labeled)?;
    if let Some(e) = lab_m.entries.iter().find(|e| e.label.is_none()) {
        return Err(CliError::Validation(format!("labeled manifest entry {} has no label", e.path.display())));
    }
    let labeled = load_dataset(&lab_m, size)?;
    let unlabeled = match args.unlabeled {
        Some(p) => load_dataset(&Manifest::read(p)?, size)?.without_labels(),
        None => ssresnet::data::Dataset::empty(cfg.model.input_channels, size),
    };
    let test_m = Manifest::read(args.test)?;
    if test_m.entries.iter().any(|e| e.label.is_none()) {
        return Err(CliError::Validation("test manifest must be fully labeled".into()));
    }
    let test = load_dataset(&test_m, size)?;

    fs::create_dir_all(args.out)?;
    let show = |p: &Path| p.display().to_string();
    let mut inputs = vec![];
    if let Some(c) = args.config {
        inputs.push(("config", show(c), file_digest(c)?));
    }
    inputs.push(("labeled", show(args.labeled), manifest_digest(args.labeled)?));
    if let Some(u) = args.unlabeled {
        inputs.push(("unlabeled", show(u), manifest_digest(u)?));
    }
    inputs.push(("test", show(args.test), manifest_digest(args.test)?));
    write_inputs(args.out, &inputs)?;

    let data = RunData { labeled: &labeled, unlabeled: &unlabeled, test: &test, class_names: test_m.class_names.clone() };
    run::run_training(&cfg, &data, args.out, args.resume)
}

/// Evaluate a checkpoint; the text report goes to `report`, JSON beside it.
pub fn cmd_eval(checkpoint: &Path, manifest: &Path, report: &Path) -> Result<(MetricsReport, PathBuf), CliError> {
    let r = run::run_eval(checkpoint, manifest)?;
    if let Some(dir) = report.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let json = run::write_report(&r, report)?;
    Ok((r, json))
}

pub fn cmd_sweep(config: Option<&Path>, train: &Path, test: &Path, spec: &sweep::SweepSpec, out: &Path) -> Result<sweep::SweepResult, CliError> {
    let cfg = load_config(config)?;
    let train_m = Manifest::read(train)?;
    let test_m = Manifest::read(test)?;
    let result = sweep::run_sweep(&cfg, &train_m, &test_m, spec, out)?;
    if result.failures() == result.cells.len() {
        return Err(CliError::Runtime("every sweep cell failed; see cells.csv".into()));
    }
    Ok(result)
}
