//! `egopose`: synthetic data generation, training, evaluation, ensembling
//! and reports for the hand, body and proficiency models.

mod commands;
pub mod config;
pub mod error;
mod models;
pub mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use egopose::io::Task;

#[derive(Parser)]
#[command(name = "egopose", version, about = "Egocentric hand, body and proficiency estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TaskArg {
    Hand,
    Body,
    Prof,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Hand => Task::Hand,
            TaskArg::Body => Task::Body,
            TaskArg::Prof => Task::Prof,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for egopose::synth::Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Val => Self::Val,
            SplitArg::Test => Self::Test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PathwayArg {
    Fused,
    Vit,
    Convnext,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModalitiesArg {
    /// Last head-pose frame only.
    Head,
    /// Head pose and egocentric video.
    Video,
    /// Head pose, video and depth.
    Depth,
    /// All streams with temporal fusion.
    Full,
}

/// Training flags shared by `train` and `ablation`; each overrides the
/// config file.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainFlags {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop after this many updates instead of at the end of `epochs`.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Peak learning rate of the cosine schedule.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Parameter precision: 32 rounds parameters to f32 after every update.
    #[arg(long, value_parser = ["32", "64"])]
    precision: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory (manifest plus annotations).
    Synth {
        task: TaskArg,
        /// Training samples.
        #[arg(long)]
        n: usize,
        /// Validation samples.
        #[arg(long, default_value_t = 0)]
        n_val: usize,
        /// Test samples.
        #[arg(long, default_value_t = 0)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a dataset directory.
    Train {
        task: TaskArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for initialization and shuffling.
        #[arg(long)]
        seed: Option<u64>,
        /// Body model input streams.
        #[arg(long)]
        modalities: Option<ModalitiesArg>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Write a checkpoint's predictions for one split.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
        /// Hand model output to write.
        #[arg(long, default_value = "fused")]
        pathway: PathwayArg,
        /// Average with the prediction on the mirrored image (hand only).
        #[arg(long)]
        tta: bool,
    },
    /// Score a prediction file against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated subset of mpjpe, pa-mpjpe, mpjve, top1.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Seconds between consecutive frames of a sequence, for MPJVE.
        #[arg(long)]
        frame_interval: Option<f64>,
        /// Metric summary JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-sample CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Fuse several prediction files.
    Ensemble {
        /// Member prediction files.
        #[arg(required = true)]
        preds: Vec<PathBuf>,
        /// Static member weights, comma-separated.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["weights_file", "optimize"])]
        weights: Vec<f64>,
        /// Weights JSON written by an earlier `--optimize` run.
        #[arg(long, conflicts_with = "optimize")]
        weights_file: Option<PathBuf>,
        /// Grid-search weights that minimize MPJPE against `--gt`.
        #[arg(long, requires = "gt")]
        optimize: bool,
        /// Validation ground truth for `--optimize`.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value_t = egopose::ensemble::DEFAULT_GRID_STEP)]
        grid_step: f64,
        #[arg(long)]
        out: PathBuf,
        /// Where `--optimize` saves the weights (default: next to `--out`).
        #[arg(long)]
        weights_out: Option<PathBuf>,
    },
    /// Compare a hand checkpoint with and without flip test-time augmentation.
    TtaEval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "val")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the body modality ladder over several seeds.
    Ablation {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated seeds (default 0,1,2).
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Plot training histories and metrics and write a markdown summary.
    Report {
        /// History files (`history.csv` or `history.json`).
        #[arg(long)]
        history: Vec<PathBuf>,
        /// Metric JSON files written by `eval --out` or `tta-eval`.
        #[arg(long)]
        eval: Vec<PathBuf>,
        /// `ablation.json` from an ablation run.
        #[arg(long)]
        ablation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), error::CliError> {
    match cli.command {
        Command::Synth {
            task,
            n,
            n_val,
            n_test,
            seed,
            out,
        } => commands::synth(task.into(), n, n_val, n_test, seed, &out),
        Command::Train {
            task,
            data,
            out,
            seed,
            modalities,
            flags,
        } => commands::train(task.into(), &data, &out, seed, modalities, &flags),
        Command::Predict {
            checkpoint,
            data,
            split,
            out,
            pathway,
            tta,
        } => commands::predict(&checkpoint, &data, split.into(), &out, pathway, tta),
        Command::Eval {
            pred,
            gt,
            metrics,
            frame_interval,
            out,
            csv,
        } => commands::eval(&pred, &gt, &metrics, frame_interval, out.as_deref(), csv.as_deref()),
        Command::Ensemble {
            preds,
            weights,
            weights_file,
            optimize,
            gt,
            grid_step,
            out,
            weights_out,
        } => commands::ensemble(commands::EnsembleArgs {
            preds,
            weights,
            weights_file,
            optimize,
            gt,
            grid_step,
            out,
            weights_out,
        }),
        Command::TtaEval {
            checkpoint,
            data,
            split,
            out,
        } => commands::tta_eval(&checkpoint, &data, split.into(), &out),
        Command::Ablation {
            data,
            out,
            seeds,
            flags,
        } => commands::ablation(&data, &out, &seeds, &flags),
        Command::Report {
            history,
            eval,
            ablation,
            out,
        } => report::report(&history, &eval, ablation.as_deref(), &out),
    }
}

/// Parses the process arguments, runs the command and maps errors to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
