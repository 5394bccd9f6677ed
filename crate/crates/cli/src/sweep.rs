//! Grid of training runs over labeled ratio, minority-class weight and seed.
//!
//! Cell `(ratio, weight, s)` uses seed `base_seed + s` both for drawing the
//! labeled subset and for the run itself, and writes a full run directory
//! under `out`. `cells.csv` lists every cell; `sweep.csv` aggregates each
//! `(ratio, weight)` over its successful seeds with the mean and the sample
//! standard deviation (0 for a single run).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ssresnet::data::{label_ratio_subset, load_dataset, Dataset, Manifest};
use ssresnet::metrics::MetricsReport;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::run::{run_training, RunData};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub ratios: Vec<f64>,
    pub weights: Vec<f64>,
    pub seeds: usize,
    /// Defaults to the class with the fewest training samples.
    pub minority_class: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub ratio: f64,
    pub weight: f64,
    pub seed: u64,
    pub dir: PathBuf,
    pub outcome: Result<MetricsReport, String>,
}

impl CellResult {
    pub fn minority_recall(&self, class: usize) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.per_class[class].recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary { mean: f64::NAN, std: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Summary { mean, std }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub minority_class: usize,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    /// Successful cells for one grid point.
    pub fn reports(&self, ratio: f64, weight: f64) -> Vec<&MetricsReport> {
        self.cells
            .iter()
            .filter(|c| c.ratio == ratio && c.weight == weight)
            .filter_map(|c| c.outcome.as_ref().ok())
            .collect()
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

const METRICS: [&str; 5] = ["accuracy", "macro_precision", "macro_recall", "macro_fscore", "minority_recall"];

fn metric_values(r: &MetricsReport, minority: usize) -> [f64; 5] {
    [r.accuracy, r.macro_precision, r.macro_recall, r.macro_fscore, r.per_class[minority].recall]
}

pub fn cell_dir_name(ratio: f64, weight: f64, seed: u64) -> String {
    format!("cell_r{ratio}_w{weight}_s{seed}")
}

fn pick(full: &Dataset, index: &HashMap<PathBuf, usize>, m: &Manifest) -> Result<Dataset, CliError> {
    let ids = m
        .entries
        .iter()
        .map(|e| {
            index.get(&m.resolve(e)).copied().ok_or_else(|| CliError::Runtime(format!("subset entry {} not in training manifest", e.path.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut d = full.select(&ids);
    d.labels = m.entries.iter().map(|e| e.label).collect();
    Ok(d)
}

pub fn run_sweep(base: &RunConfig, train: &Manifest, test: &Manifest, spec: &SweepSpec, out: &Path) -> Result<SweepResult, CliError> {
    if spec.ratios.is_empty() || spec.weights.is_empty() || spec.seeds == 0 {
        return Err(CliError::Validation("sweep needs at least one ratio, one weight and one seed".into()));
    }
    if let Some(r) = spec.ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
        return Err(CliError::Validation(format!("ratio {r} outside (0, 1]")));
    }
    if let Some(w) = spec.weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(CliError::Validation(format!("weight {w} must be > 0")));
    }
    let counts = train.class_counts();
    let minority = match spec.minority_class {
        Some(c) if c < base.model.num_classes => c,
        Some(c) => return Err(CliError::Validation(format!("minority class {c} out of range"))),
        None => (0..counts.len()).min_by_key(|&c| counts[c]).ok_or_else(|| CliError::Validation("training manifest is empty".into()))?,
    };
    base.train.class_weights.with(minority, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;

    fs::create_dir_all(out)?;
    fs::write(out.join("config.txt"), base.to_text())?;
    let size = base.model.input_size;
    let full = load_dataset(train, size)?;
    let test_data = load_dataset(test, size)?;
    let index: HashMap<PathBuf, usize> = train.entries.iter().enumerate().map(|(i, e)| (train.resolve(e), i)).collect();

    let mut cells = Vec::new();
    for &ratio in &spec.ratios {
        for &weight in &spec.weights {
            for s in 0..spec.seeds {
                let seed = base.train.seed.wrapping_add(s as u64);
                let dir = out.join(cell_dir_name(ratio, weight, seed));
                eprintln!("cell ratio={ratio} weight={weight} seed={seed}");
                let outcome = run_cell(base, train, &full, &index, &test_data, &test.class_names, (ratio, weight, seed, minority), &dir)
                    .map_err(|e| e.to_string());
                if let Err(e) = &outcome {
                    eprintln!("cell failed: {e}");
                }
                cells.push(CellResult { ratio, weight, seed, dir, outcome });
            }
        }
    }
    let result = SweepResult { minority_class: minority, cells };
    write_tables(&result, spec, out)?;
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    base: &RunConfig,
    train: &Manifest,
    full: &Dataset,
    index: &HashMap<PathBuf, usize>,
    test: &Dataset,
    class_names: &[String],
    (ratio, weight, seed, minority): (f64, f64, u64, usize),
    dir: &Path,
) -> Result<MetricsReport, CliError> {
    let mut cfg = base.clone();
    cfg.train.seed = seed;
    cfg.train.class_weights = base.train.class_weights.with(minority, weight).map_err(|e| CliError::Validation(e.to_string()))?;
    fs::create_dir_all(dir)?;
    let (labeled, unlabeled) = label_ratio_subset(train, ratio, seed)?;
    labeled.write(&dir.join("labeled.csv"))?;
    unlabeled.write(&dir.join("unlabeled.csv"))?;
    let data = RunData {
        labeled: &pick(full, index, &labeled)?,
        unlabeled: &pick(full, index, &unlabeled)?.without_labels(),
        test,
        class_names: class_names.to_vec(),
    };
    run_training(&cfg, &data, dir, false)
}

fn write_tables(result: &SweepResult, spec: &SweepSpec, out: &Path) -> Result<(), CliError> {
    let minority = result.minority_class;
    let mut cells = format!("ratio,weight,seed,status,{},error\n", METRICS.join(","));
    for c in &result.cells {
        match &c.outcome {
            Ok(r) => {
                let v = metric_values(r, minority).map(|x| x.to_string());
                writeln!(cells, "{},{},{},ok,{},", c.ratio, c.weight, c.seed, v.join(","))
            }
            Err(e) => writeln!(cells, "{},{},{},failed,,,,,,\"{}\"", c.ratio, c.weight, c.seed, e.replace('"', "'")),
        }
        .expect("write to string");
    }
    fs::write(out.join("cells.csv"), cells)?;

    let mut agg = String::from("ratio,weight,runs,failed");
    for m in METRICS {
        write!(agg, ",{m}_mean,{m}_std").expect("write to string");
    }
    agg.push('\n');
    for &ratio in &spec.ratios {
        for &weight in &spec.weights {
            let reports = result.reports(ratio, weight);
            let failed = spec.seeds - reports.len();
            write!(agg, "{ratio},{weight},{},{failed}", reports.len()).expect("write to string");
            for k in 0..METRICS.len() {
                let vals: Vec<f64> = reports.iter().map(|r| metric_values(r, minority)[k]).collect();
                let s = summarize(&vals);
                write!(agg, ",{},{}", s.mean, s.std).expect("write to string");
            }
            agg.push('\n');
        }
    }
    fs::write(out.join("sweep.csv"), agg)?;
    Ok(())
}
