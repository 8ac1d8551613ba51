use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isonca::commands::{self, CommonOpts, RunOpts, VoronoiOpts};
use isonca::config::load_edits;
use isonca::CliError;

/// Isotropic neural cellular automata: train local update rules and grow
/// patterns on regular and Voronoi grids.
#[derive(Parser)]
#[command(name = "isonca", version, about)]
struct Cli {
    /// Worker threads for batch-parallel training (env: ISONCA_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Random seed for stochastic updates / sampling.
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Train a rule from a JSON run configuration.
    Train {
        /// Path to the training run configuration JSON.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Roll out a trained checkpoint, exporting PNG frames.
    Run {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of CA steps.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        /// Record a frame every this many steps (0 = none).
        #[arg(long, default_value_t = 100)]
        stride: usize,
        /// Update every cell each step instead of Bernoulli gating.
        #[arg(long)]
        synchronous: bool,
        /// Exactly associative fixed-point perception.
        #[arg(long)]
        fixed_point: bool,
        /// Square grid side length.
        #[arg(long, default_value_t = 64)]
        grid_size: usize,
        /// Structured seed JSON (defaults to a single center seed).
        #[arg(long)]
        seed_file: Option<PathBuf>,
        /// Rotate the seed by 90/180/270 degrees before running.
        #[arg(long)]
        rotate: Option<u32>,
        /// Rotate the stochastic update masks together with the seed.
        #[arg(long)]
        rotate_rng: bool,
        /// Also dump the final full state as little-endian f32.
        #[arg(long)]
        dump_final: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Edit a structured seed (move/recolor/swap/delete/duplicate), then run.
    MutateSeed {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Structured seed JSON to edit.
        #[arg(long)]
        seed_file: PathBuf,
        /// JSON array of edits.
        #[arg(long)]
        edits: PathBuf,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        stride: usize,
        #[arg(long)]
        synchronous: bool,
        #[arg(long)]
        fixed_point: bool,
        #[arg(long, default_value_t = 64)]
        grid_size: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Rotation-loss profile between two same-size PNGs, as CSV.
    PolarDebug {
        image_a: PathBuf,
        image_b: PathBuf,
        #[arg(long, default_value_t = 256)]
        n_theta: usize,
        #[arg(long, default_value_t = 32)]
        n_r: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a checkpoint on a Poisson-disk/Voronoi graph.
    VoronoiRun {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Poisson-disk radius in domain units (the training cell is 1).
        #[arg(long, default_value_t = 0.87)]
        r_pd: f64,
        /// Square domain side length in domain units.
        #[arg(long, default_value_t = 64.0)]
        domain: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 100)]
        stride: usize,
        /// Render scale in pixels per domain unit.
        #[arg(long, default_value_t = 8.0)]
        scale: f64,
        #[arg(long)]
        seed_file: Option<PathBuf>,
        /// Override the graph Laplacian gain (12 matches the square-grid
        /// stencil; 1 is the unscaled operator).
        #[arg(long)]
        laplacian_gain: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Print checkpoint metadata.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn configure_threads(cli_threads: Option<usize>) {
    let threads = cli_threads.or_else(|| {
        std::env::var("ISONCA_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn dispatch(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    configure_threads(cli.threads);
    match cli.command {
        Command::Train { config, output } => {
            let opts = CommonOpts { out_dir: output.out, rng_seed: output.rng_seed, argv };
            commands::cmd_train(&config, &opts)
        }
        Command::Run {
            checkpoint,
            steps,
            stride,
            synchronous,
            fixed_point,
            grid_size,
            seed_file,
            rotate,
            rotate_rng,
            dump_final,
            output,
        } => {
            let run = RunOpts {
                steps,
                stride,
                synchronous,
                fixed_point,
                grid_size,
                seed_file,
                rotate,
                rotate_rng,
                dump_final,
            };
            commands::warn_if_even_symmetric(&run);
            let opts = CommonOpts { out_dir: output.out, rng_seed: output.rng_seed, argv };
            commands::cmd_run(&checkpoint, &run, &opts)
        }
        Command::MutateSeed {
            checkpoint,
            seed_file,
            edits,
            steps,
            stride,
            synchronous,
            fixed_point,
            grid_size,
            output,
        } => {
            let edit_list = load_edits(&edits)?;
            let run = RunOpts {
                steps,
                stride,
                synchronous,
                fixed_point,
                grid_size,
                seed_file: None,
                rotate: None,
                rotate_rng: false,
                dump_final: false,
            };
            let opts = CommonOpts { out_dir: output.out, rng_seed: output.rng_seed, argv };
            commands::cmd_mutate_seed(&checkpoint, &seed_file, &edit_list, &run, &opts)
        }
        Command::PolarDebug { image_a, image_b, n_theta, n_r, output } => {
            let opts = CommonOpts { out_dir: output.out, rng_seed: output.rng_seed, argv };
            commands::cmd_polar_debug(&image_a, &image_b, n_theta, n_r, &opts)
        }
        Command::VoronoiRun {
            checkpoint,
            r_pd,
            domain,
            steps,
            stride,
            scale,
            seed_file,
            laplacian_gain,
            output,
        } => {
            let vopts = VoronoiOpts { r_pd, domain, steps, stride, scale, seed_file, laplacian_gain };
            let opts = CommonOpts { out_dir: output.out, rng_seed: output.rng_seed, argv };
            commands::cmd_voronoi_run(&checkpoint, &vopts, &opts)
        }
        Command::Inspect { checkpoint } => commands::cmd_inspect(&checkpoint),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    match dispatch(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
