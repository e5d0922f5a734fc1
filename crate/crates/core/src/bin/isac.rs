use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isac::experiments::{run, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "isac", version, about = "Multi-user uplink sensing and decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV tables and manifest.
    Run {
        /// recovery3d, dualpoly2d, localization or fusion_aoa_ser
        experiment: Experiment,
        /// JSON overrides of the experiment defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> isac::Result<ExitCode> {
    let Command::Run { experiment, config, out, seed, workers } = Cli::parse().command;
    let mut cfg = match config {
        Some(path) => ExperimentConfig::from_file(Some(experiment), path)?,
        None => ExperimentConfig::defaults(experiment),
    };
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(n) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| isac::Error::Domain(format!("worker pool: {e}")))?;
    }
    let summary = run(&cfg)?;
    println!(
        "{}: {} trial(s), {} non-converged, wrote {} to {}",
        summary.experiment,
        summary.trials,
        summary.non_converged,
        summary.files.join(", "),
        cfg.output_dir.display()
    );
    Ok(if summary.non_converged > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}
