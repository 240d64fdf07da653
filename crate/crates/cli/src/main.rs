use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hard_cli::compare::compare;
use hard_cli::render::render_grid;
use hard_cli::{run_experiment, CliError, CliResult, ExperimentConfig, ResultSummary, RunOptions};
use hard_core::augmentors::Augmentor;
use hard_core::data::{load_mnist_dir, load_idx_images, synth_shapes};
use hard_core::diffcore::{Rng, Tensor};
use hard_core::models::Checkpoint;

/// Images shown by `hard render`.
const RENDER_BATCH: usize = 16;

#[derive(Parser)]
#[command(name = "hard", version, about = "Distillation with adversarially trained augmentors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Replace the seed list from the config (repeatable).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads for independent seeds.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Tabulate two or more summary.json files.
    Compare {
        #[arg(required = true, num_args = 2..)]
        summaries: Vec<PathBuf>,
        /// CSV destination; defaults to <out-dir>/compare.csv.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Apply a saved augmentor to a dataset and write a PNG grid.
    Render {
        checkpoint: PathBuf,
        /// `synthetic`, an IDX image file, or a directory with MNIST IDX files.
        dataset: String,
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run { config, seeds, out_dir, threads } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = RunOptions {
                seeds: (!seeds.is_empty()).then_some(seeds),
                out_dir,
                threads,
            };
            let outcome = run_experiment(&cfg, &opts)?;
            for (name, s) in &outcome.summary.metrics {
                println!("{name}: {:.4} ± {:.4} (n={})", s.mean, s.sem, s.n);
            }
            println!("results in {} ({:.1}s)", outcome.out_dir.display(), outcome.wall_seconds);
            Ok(())
        }
        Command::Compare { summaries, csv, out_dir } => {
            let loaded = summaries.iter().map(|p| ResultSummary::load(p)).collect::<CliResult<Vec<_>>>()?;
            let table = compare(&loaded)?;
            print!("{}", table.to_table());
            let csv = csv.unwrap_or_else(|| out_dir.join("compare.csv"));
            if let Some(parent) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            std::fs::write(&csv, table.to_csv()).map_err(|e| CliError::io(&csv, e))
        }
        Command::Render { checkpoint, dataset, out, seed } => render(&checkpoint, &dataset, &out, seed),
    }
}

fn render(checkpoint: &Path, dataset: &str, out: &Path, seed: u64) -> CliResult<()> {
    let bytes = std::fs::read(checkpoint).map_err(|e| CliError::io(checkpoint, e))?;
    let ck = Checkpoint::decode(&bytes)
        .map_err(|e| CliError::Other(format!("{}: {e}", checkpoint.display())))?;
    let aug = Augmentor::from_checkpoint(ck)?;
    let images = load_images(dataset)?;
    let n = images.shape()[0].min(RENDER_BATCH);
    let batch = images.select_rows(&(0..n).collect::<Vec<_>>())?;
    let augmented = aug.augment_tensor(&batch, &mut Rng::seed(seed))?;
    render_grid(&augmented, out)
}

fn load_images(dataset: &str) -> CliResult<Tensor> {
    if dataset == "synthetic" {
        return Ok(synth_shapes(RENDER_BATCH, 0)?.images);
    }
    let path = Path::new(dataset);
    if path.is_dir() {
        Ok(load_mnist_dir(path, "test")?.images)
    } else {
        Ok(load_idx_images(path)?)
    }
}
