use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multistop::cli::{self, config, selftest, ExperimentConfig};

/// Multiple optimal stopping experiments.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run the fast exact-pipeline and invariant checks.
    Selftest,
    /// Print a bundled config (log_utility_n5, multi_put_n5, defaults).
    PrintConfig { name: String },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let level = match args.command {
        Command::Run { .. } => "info",
        _ => "warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let code = match args.command {
        Command::Run { config } => {
            let root = cli::output_root();
            match ExperimentConfig::load(&config).and_then(|cfg| cli::run_experiment(&cfg, &root)) {
                Ok(s) => {
                    println!("wrote {}", s.dir.display());
                    println!("diagonal relative l2 error {:.4e}", s.rel_error);
                    if let Some((m, sd)) = s.slope_mean_std() {
                        println!("rate slope {m:.3} +- {sd:.3}");
                    }
                    cli::EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    cli::exit_code(&e)
                }
            }
        }
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{c}");
            }
            if checks.iter().all(|c| c.passed) {
                cli::EXIT_OK
            } else {
                cli::EXIT_NUMERIC
            }
        }
        Command::PrintConfig { name } => match config::bundled(&name) {
            Some(text) => {
                print!("{text}");
                cli::EXIT_OK
            }
            None => {
                eprintln!(
                    "error: no bundled config {name:?} (available: {})",
                    config::BUNDLED_NAMES.join(", ")
                );
                cli::EXIT_CONFIG
            }
        },
    };
    ExitCode::from(code as u8)
}
