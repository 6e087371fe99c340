use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;

use pcbnet::dataset::Resolution;
use pcbnet::harness::commands::{self, TrainOptions};
use pcbnet::harness::{summary_table, Architecture, HarnessError};

/// Pre-crime behavior segmentation, dataset assembly and 3D CNN training.
///
/// Set PCBNET_THREADS to cap the number of worker threads and RUST_LOG for
/// log verbosity. Failures exit nonzero with a JSON record on stderr.
#[derive(Parser)]
#[command(name = "pcbnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut PCB segments out of an annotated video.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory with <video_id>.pcb or <video_id>.rgb.pcb.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble a named dataset from suspicious and normal segment pools.
    BuildDataset {
        /// e.g. SBT_unbalanced_60s120n_30t_10f_80x60
        #[arg(long)]
        name: String,
        #[arg(long)]
        suspicious: PathBuf,
        #[arg(long)]
        normal: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Repeat segments shorter than the depth instead of failing.
        #[arg(long)]
        loop_pad: bool,
    },
    /// Generate synthetic suspicious/normal segment pools.
    Synth {
        #[arg(long)]
        per_class: usize,
        #[arg(long, value_name = "WxH")]
        resolution: Resolution,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset's train split and save a checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        epochs: usize,
        #[arg(long)]
        batch: usize,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Four comma-separated conv widths; defaults to 32,32,64,64.
        #[arg(long, value_parser = parse_filters)]
        filters: Option<[usize; 4]>,
        /// Hidden dense units; defaults to 512.
        #[arg(long)]
        dense: Option<usize>,
    },
    /// Evaluate a checkpoint on a dataset's test split.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run every configuration of a grid file.
    Experiment {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        runs: usize,
        /// 0 for a single stratified split per run.
        #[arg(long)]
        folds: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_filters(s: &str) -> Result<[usize; 4], String> {
    let widths = s.split(',').map(|w| w.trim().parse::<usize>()).collect::<Result<Vec<_>, _>>();
    match widths {
        Ok(w) if w.len() == 4 => Ok([w[0], w[1], w[2], w[3]]),
        _ => Err(format!("expected four comma-separated widths, got {s:?}")),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<(), HarnessError> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Extract { manifest, frames, out } => print_json(&commands::extract(&manifest, &frames, &out)?),
        Command::BuildDataset { name, suspicious, normal, out, loop_pad } => {
            let (info, index) = commands::build_dataset(&name, &suspicious, &normal, &out, loop_pad)?;
            print_json(&json!({ "name": info.name, "entries": index.entries.len(), "out": out }))
        }
        Command::Synth { per_class, resolution, depth, seed, out } => {
            print_json(&commands::synth(per_class, resolution, depth, seed, &out)?)
        }
        Command::Train { dataset, epochs, batch, lr, seed, checkpoint, filters, dense } => {
            let paper = Architecture::PAPER;
            let architecture = Architecture {
                filters: filters.unwrap_or(paper.filters),
                dense_units: dense.unwrap_or(paper.dense_units),
            };
            let options = TrainOptions { epochs, batch_size: batch, learning_rate: lr, seed, architecture };
            let summary = commands::train(&dataset, &options, &checkpoint)?;
            print_json(&json!({
                "dataset": summary.dataset,
                "train_clips": summary.train_clips,
                "parameter_count": summary.parameter_count,
                "steps": summary.step_count,
                "final_loss": summary.losses.last(),
                "checkpoint": checkpoint,
            }))
        }
        Command::Eval { dataset, checkpoint, report } => {
            let r = commands::eval(&dataset, &checkpoint, &report)?;
            print!("{}", r.table());
            Ok(())
        }
        Command::Experiment { grid, runs, folds, seed, out } => {
            let reports = commands::experiment(&grid, runs, folds, seed, &out)?;
            print!("{}", summary_table(&reports));
            Ok(())
        }
    }
}

fn fail(kind: &str, message: String, offset: Option<u64>, code: u8) -> ExitCode {
    let mut record = json!({ "error": { "kind": kind, "message": message } });
    if let Some(offset) = offset {
        record["error"]["offset"] = json!(offset);
    }
    eprintln!("{record}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim().to_string(), None, 2),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), e.offset(), 1),
    }
}
