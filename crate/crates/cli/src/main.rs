//! Command-line interface for MLN-DLM inference: simulate datasets, run
//! MAP estimation, draw joint posteriors, run the Gibbs hyperparameter
//! sampler, and sweep benchmark grids. See README for formats.

use clap::{Parser, Subcommand};
use mlndlm_cli::commands::{self, DataArgs};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "mlndlm", version, about = "Bayesian multinomial logistic-normal DLM inference")]
struct Cli {
    /// Worker threads for posterior draws (0 or absent = default pool).
    /// Outputs are identical for any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (counts, metadata, truth, model prior).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Overwrite an existing run directory.
        #[arg(long)]
        force: bool,
    },
    /// MAP estimation of the latent log-ratio states.
    Map {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
        /// Treat observed columns with zero total count as missing.
        #[arg(long)]
        zero_is_missing: bool,
    },
    /// Joint posterior draws via the collapse-uncollapse pipeline.
    Sample {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        zero_is_missing: bool,
    },
    /// Blocked Gibbs sampling of diagonal state variances.
    Gibbs {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        metadata: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Chain length; may also come from [gibbs].iterations.
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        zero_is_missing: bool,
    },
    /// MAP scaling sweep over a (D, T) grid.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or(0);
    #[cfg(feature = "parallel")]
    if threads > 0 {
        // Ignore failure: the pool can only be configured once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let outcome = match &cli.command {
        Command::Simulate {
            config,
            out_dir,
            force,
        } => commands::cmd_simulate(config, out_dir, *force, threads),
        Command::Map {
            data,
            metadata,
            config,
            out_dir,
            force,
            zero_is_missing,
        } => commands::cmd_map(
            &DataArgs {
                data,
                metadata,
                zero_is_missing: *zero_is_missing,
            },
            config,
            out_dir,
            *force,
            threads,
        ),
        Command::Sample {
            data,
            metadata,
            config,
            out_dir,
            force,
            zero_is_missing,
        } => commands::cmd_sample(
            &DataArgs {
                data,
                metadata,
                zero_is_missing: *zero_is_missing,
            },
            config,
            out_dir,
            *force,
            threads,
        ),
        Command::Gibbs {
            data,
            metadata,
            config,
            iterations,
            out_dir,
            force,
            zero_is_missing,
        } => commands::cmd_gibbs(
            &DataArgs {
                data,
                metadata,
                zero_is_missing: *zero_is_missing,
            },
            config,
            *iterations,
            out_dir,
            *force,
            threads,
        ),
        Command::Bench {
            config,
            out_dir,
            force,
        } => commands::cmd_bench(config, out_dir, *force, threads),
    };

    if let Err(e) = outcome {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
