use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssresnet::data::{SplitSpec, SynthSpec};
use ssresnet_cli::sweep::SweepSpec;
use ssresnet_cli::{config::parse_list, CliError, TrainArgs};

/// Two-path semi-supervised ResNet: data tooling, training, evaluation, sweeps.
#[derive(Parser)]
#[command(name = "ssresnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic grayscale dataset (PGM images + manifest.csv).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Images per class, comma separated.
        #[arg(long, default_value = "2000,2200,25")]
        counts: String,
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stratified train/test split of a manifest.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "train-frac", default_value_t = 0.7)]
        train_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Keep labels on a per-class fraction of a manifest.
    Subset {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and report on the test manifest.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        unlabeled: Option<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint and log in --out.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on a labeled manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Text report path; JSON is written beside it.
        #[arg(long)]
        report: PathBuf,
    },
    /// Grid of runs over labeled ratio x minority weight x seed.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "0.05,0.07,0.09")]
        ratios: String,
        #[arg(long, default_value = "2,5,10")]
        weights: String,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Class whose weight is swept; defaults to the rarest training class.
        #[arg(long = "minority-class")]
        minority_class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { out, counts, size, noise, seed } => {
            let class_counts = counts
                .split(',')
                .map(|c| c.trim().parse::<usize>().map_err(|_| CliError::Validation(format!("invalid count `{c}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let m = ssresnet_cli::cmd_synth(&SynthSpec { class_counts, image_size: size, noise_sigma: noise, seed }, &out)?;
            println!("wrote {} images to {}", m.len(), out.display());
        }
        Command::Split { manifest, train_frac, seed, out } => {
            let (train, test) = ssresnet_cli::cmd_split(&manifest, &SplitSpec { train_fraction: train_frac, seed }, &out)?;
            println!("train {} / test {} -> {}", train.len(), test.len(), out.display());
        }
        Command::Subset { manifest, ratio, seed, out } => {
            let (lab, unlab) = ssresnet_cli::cmd_subset(&manifest, ratio, seed, &out)?;
            println!("labeled {} / unlabeled {} -> {}", lab.len(), unlab.len(), out.display());
        }
        Command::Train { config, labeled, unlabeled, test, out, resume } => {
            let args = TrainArgs { config: config.as_deref(), labeled: &labeled, unlabeled: unlabeled.as_deref(), test: &test, out: &out, resume };
            let r = ssresnet_cli::cmd_train(&args)?;
            println!("accuracy {:.4} macro_f {:.4} -> {}", r.accuracy, r.macro_fscore, out.display());
        }
        Command::Eval { checkpoint, manifest, report } => {
            let (r, json) = ssresnet_cli::cmd_eval(&checkpoint, &manifest, &report)?;
            println!("accuracy {:.4} macro_f {:.4} -> {} {}", r.accuracy, r.macro_fscore, report.display(), json.display());
        }
        Command::Sweep { config, train, test, ratios, weights, seeds, minority_class, out } => {
            let spec = SweepSpec { ratios: parse_list("ratios", &ratios)?, weights: parse_list("weights", &weights)?, seeds, minority_class };
            let r = ssresnet_cli::cmd_sweep(config.as_deref(), &train, &test, &spec, &out)?;
            println!("{} cells ({} failed) -> {}", r.cells.len(), r.failures(), out.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
