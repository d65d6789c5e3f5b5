//! Experiment harness over the `feynkac` library: config parsing, grid
//! orchestration, reproducible seeding, and CSV emission.

pub mod config;
pub mod experiments;
pub mod table;

use clap::{Parser, Subcommand};

/// Exit code for configuration and validation failures.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code for failures while running a validated experiment.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "feynkac",
    about = "Particle inference experiments on finite models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write its CSV.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: std::path::PathBuf,
        /// Path of the CSV to write; defaults to the config's `output`.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Cap the number of worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: std::path::PathBuf,
    },
    /// List the experiment kinds this binary understands.
    ListExperiments,
}

/// Parses arguments from the process environment and executes them,
/// returning the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            let mut parsed = match config::load_config(&config) {
                Ok(parsed) => parsed,
                Err(err) => {
                    eprintln!("error: {err:#}");
                    return EXIT_CONFIG;
                }
            };
            if let Some(seed) = seed {
                parsed.seed = seed;
            }
            let out = match out.or_else(|| parsed.output.clone()) {
                Some(out) => out,
                None => {
                    eprintln!("error: no output path; pass --out or set output in the config");
                    return EXIT_CONFIG;
                }
            };
            if let Some(threads) = threads {
                if let Err(err) = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                {
                    eprintln!("error: could not size the thread pool: {err}");
                    return EXIT_RUNTIME;
                }
            }
            let rows = match experiments::run_experiment(&parsed) {
                Ok(rows) => rows,
                Err(err) => {
                    eprintln!("error: {err:#}");
                    return EXIT_RUNTIME;
                }
            };
            if let Err(err) = table::write_csv(&rows, &out) {
                eprintln!("error: {err:#}");
                return EXIT_RUNTIME;
            }
            println!("wrote {} rows to {}", rows.len(), out.display());
            0
        }
        Command::Validate { config } => match config::load_config(&config) {
            Ok(parsed) => {
                println!(
                    "ok: {} experiment on model {}",
                    parsed.kind.name(),
                    parsed.model_id
                );
                0
            }
            Err(err) => {
                eprintln!("error: {err:#}");
                EXIT_CONFIG
            }
        },
        Command::ListExperiments => {
            for kind in config::ExperimentKind::ALL {
                println!("{}", kind.name());
            }
            0
        }
    }
}
