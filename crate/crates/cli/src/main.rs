//! `shadowgraph`: batch front end for dataset generation, training,
//! segmentation, measurement and evaluation.

mod commands;
mod config;
mod svg;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "shadowgraph", version, about = "Learning-based particle shadowgraphy pipeline")]
#[command(disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic labeled dataset with a manifest.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of samples.
        #[arg(long)]
        n: usize,
    },
    /// Train the U-net on a generated dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory or manifest file.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory for model.stck, loss_history.csv and checkpoints.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the network and save its two output channels as images.
    Infer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// An image file, or a dataset directory to process every sample.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn binary and centroid channel images into a label map.
    Segment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        binary: PathBuf,
        #[arg(long)]
        centroid: PathBuf,
        /// Output label map (16-bit PGM).
        #[arg(long)]
        out: PathBuf,
        /// Image to outline the regions on; requires --overlay.
        #[arg(long, requires = "overlay")]
        image: Option<PathBuf>,
        /// Output path of the outline image.
        #[arg(long, requires = "image")]
        overlay: Option<PathBuf>,
    },
    /// Measure every region of a label map into a CSV table.
    Measure {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score measurement tables against ground-truth tables.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Measurement (or ground-truth) tables, one per image.
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        /// Ground-truth tables, paired with --pred in order.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        /// Report CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the trained model and the conventional baseline on a dataset.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw size and aspect distribution charts from report CSVs.
    Report {
        /// Report CSVs written by `eval` or `compare`.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// Series names, paired with --input in order (default: file stem).
        #[arg(long)]
        name: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(args: impl IntoIterator<Item = OsString>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            eprint!("{}", e.render());
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
