//! `bpr` — sharpen instance segmentation masks by re-deciding the pixels
//! along each predicted boundary.
//!
//! Set `BPR_LOG` (standard `env_logger` syntax) for progress logging.
//! Exit codes: 0 success, 1 validation error, 2 I/O error.

mod commands;
mod opts;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use opts::{FileConfig, PipelineOpts, Resolved};

#[derive(Parser)]
#[command(
    name = "bpr",
    version,
    about = "Boundary patch refinement for instance segmentation masks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON file with default values for the flags; explicit flags win
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for the parallel stages (default: one per core)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus
    Gen {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Number of scenes (default 20)
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "PX")]
        image_size: Option<u32>,
        /// Instances per scene
        #[arg(long)]
        instances: Option<u32>,
    },
    /// Refine the masks of a scene or corpus
    Refine {
        /// Scene or corpus directory
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        opts: PipelineOpts,
        /// Print per-stage wall-clock times and per-image patch counts
        #[arg(long)]
        timing: bool,
    },
    /// Score predictions against ground truth
    Eval {
        /// Scene or corpus directory holding the predictions
        pred: PathBuf,
        /// Take ground truth from this corpus instead of `pred`'s own
        #[arg(long, value_name = "DIR")]
        gt: Option<PathBuf>,
        /// Unrefined corpus to attribute per-instance IoU deltas against
        #[arg(long, value_name = "DIR")]
        baseline: Option<PathBuf>,
        /// Write the full report as JSON
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Ground-truth band-replacement study (refinement headroom per band)
    Upperbound {
        input: PathBuf,
        /// Comma-separated band widths in pixels; `inf` = whole mask
        #[arg(long, default_value = "1,2,3,inf")]
        bands: String,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Refine + evaluate across one axis of settings
    Sweep {
        input: PathBuf,
        #[arg(long, value_enum)]
        axis: commands::SweepAxis,
        /// Comma-separated axis values (defaults per axis; patch-size
        /// values are SIZE/PAD pairs)
        #[arg(long)]
        values: Option<String>,
        #[command(flatten)]
        opts: PipelineOpts,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Write boundary patches into an exchange directory for an external
    /// refiner
    Export {
        input: PathBuf,
        #[command(flatten)]
        opts: PipelineOpts,
        /// Keep only predictions matched to ground truth (IoU > 0.5) and
        /// pin the NMS threshold to 0.25
        #[arg(long)]
        training: bool,
    },
    /// Rebuild masks from an exchange directory the external refiner filled
    Import {
        input: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[command(flatten)]
        opts: PipelineOpts,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BPR_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &bpr_core::Error) -> u8 {
    match err {
        bpr_core::Error::Io { .. } | bpr_core::Error::Malformed { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> bpr_core::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    configure_pool(cli.jobs.or(file.jobs))?;
    match cli.command {
        Command::Gen { out, scenes, seed, image_size, instances } => commands::gen(
            &out,
            scenes.or(file.scenes),
            seed.or(file.seed),
            image_size.or(file.image_size),
            instances.or(file.instances),
        ),
        Command::Refine { input, out, opts, timing } => {
            let resolved = Resolved::merge(&opts, &file)?;
            commands::refine(&input, &out, &resolved, timing)
        }
        Command::Eval { pred, gt, baseline, out } => {
            commands::eval(&pred, gt.as_deref(), baseline.as_deref(), out.as_deref())
        }
        Command::Upperbound { input, bands, out } => {
            commands::upperbound(&input, &bands, out.as_deref())
        }
        Command::Sweep { input, axis, values, opts, out } => {
            let resolved = Resolved::merge(&opts, &file)?;
            commands::sweep(&input, axis, values.as_deref(), &resolved, out.as_deref())
        }
        Command::Export { input, opts, training } => {
            let resolved = Resolved::merge(&opts, &file)?;
            commands::export(&input, &resolved, training)
        }
        Command::Import { input, out, opts } => {
            let resolved = Resolved::merge(&opts, &file)?;
            commands::import(&input, &out, &resolved)
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_pool(jobs: Option<usize>) -> bpr_core::Result<()> {
    let Some(n) = jobs else { return Ok(()) };
    if n == 0 {
        return Err(bpr_core::Error::invalid("jobs", "must be positive"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| bpr_core::Error::invalid("thread pool", e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn configure_pool(jobs: Option<usize>) -> bpr_core::Result<()> {
    if jobs.is_some() {
        log::warn!("--jobs has no effect in a single-threaded build");
    }
    Ok(())
}
