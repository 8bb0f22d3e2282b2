//! `splatstyle` command-line entry points.

mod commands;
mod config;
mod dataset;
mod log;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "splatstyle",
    version,
    about = "Gaussian splatting with reference-based stylization"
)]
struct Cli {
    /// Worker threads for rendering (default: all cores).
    #[arg(long, global = true, env = "REGS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a Gaussian scene to a posed image dataset.
    Pretrain {
        #[arg(long)]
        dataset: PathBuf,
        /// Training config (TOML, or JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output scene (PLY).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        /// Maximum Gaussian count.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Stylize a content scene with the dataset's reference.png.
    Stylize {
        #[arg(long)]
        dataset: PathBuf,
        /// Content scene (PLY).
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        /// `builtin` or `file:<dir>`; relative directories are resolved
        /// against the dataset root.
        #[arg(long)]
        extractor: Option<String>,
        /// Gaussians that densification may add on top of the content scene.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Render a scene at each camera of a camera file.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// Camera JSON: a list of cameras or a single camera.
        #[arg(long)]
        cameras: PathBuf,
        /// Render only the camera with this id.
        #[arg(long)]
        camera: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an interpolated path between two cameras to numbered frames.
    RenderPath {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        /// Start camera id (default: first camera).
        #[arg(long)]
        from: Option<String>,
        /// End camera id (default: last camera).
        #[arg(long)]
        to: Option<String>,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check analytic gradients against finite differences on random scenes.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        scenes: usize,
        #[arg(long, default_value_t = 20)]
        gaussians: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON report path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a desk-scale benchmark scenario.
    Bench {
        scenario: Scenario,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value_t = 200)]
        budget: usize,
        /// Image edge length of the toy benchmark.
        #[arg(long, default_value_t = 64)]
        size: u32,
    },
    /// Write the synthetic checkerboard-quad dataset, with held-out views
    /// and a stylized reference.
    ToyDataset {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        size: u32,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Scenario {
    /// Three-arm densification comparison under one Gaussian budget.
    Control,
    /// Stylization with the content render as reference.
    Identity,
    /// Two-pass stylization from a held-out view.
    Robustness,
    /// Render time against splat count.
    Throughput,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
