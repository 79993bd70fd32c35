use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tskit::{run_task, RunConfig};

/// Run one timestepper task described by a configuration file.
#[derive(Debug, Parser)]
#[command(name = "tskit", version)]
struct Args {
    /// Path of the TOML run configuration.
    config: PathBuf,
    /// Output directory, overriding `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress the run report on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    env_logger::init();
    let args = Args::parse();
    let mut config = match RunConfig::load(&args.config) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = args.out {
        config.output.dir = dir;
    }
    match run_task(&config) {
        Ok(report) => {
            if !args.quiet {
                print!("{report}");
            }
            if report.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
