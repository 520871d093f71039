use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prizecorr::cli_io::{self, EstimateOptions, EstimationMethod, SimulateOptions};
use prizecorr::{Coupling, Error, SimConfig};

#[derive(Parser)]
#[command(
    name = "prizecorr",
    version,
    about = "Infer rating/score correlation from winner ranks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate r from a dataset descriptor.
    Estimate {
        descriptor: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: EstimationMethod,
        #[arg(long, default_value_t = 0.001)]
        grid_step: f64,
        #[arg(long, default_value_t = 0.95)]
        credible_level: f64,
        /// Write the posterior grid as CSV (posterior method only).
        #[arg(long)]
        out_posterior: Option<PathBuf>,
    },
    /// Monte Carlo top-M overlap experiment, optionally with a profile scan over r.
    Simulate {
        #[arg(long)]
        pool: usize,
        #[arg(long)]
        winners: usize,
        #[arg(long, allow_hyphen_values = true)]
        r: f64,
        #[arg(long, value_parser = parse_coupling, default_value = "gaussian")]
        coupling: Coupling,
        #[arg(long)]
        reps: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        observed_overlap: Option<usize>,
        /// LO:HI:STEP grid of r for the profile scan.
        #[arg(long)]
        scan: Option<String>,
        /// Write the overlap histogram as CSV.
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Write the profile scan as CSV.
        #[arg(long)]
        out_scan: Option<PathBuf>,
    },
    /// Print the z-score thresholds implied by a descriptor.
    Thresholds { descriptor: PathBuf },
}

fn parse_method(s: &str) -> Result<EstimationMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_coupling(s: &str) -> Result<Coupling, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn run(cli: Cli) -> prizecorr::Result<cli_io::RunReport> {
    match cli.command {
        Command::Estimate {
            descriptor,
            method,
            grid_step,
            credible_level,
            out_posterior,
        } => {
            let opts = EstimateOptions {
                method,
                grid_step,
                credible_level,
                out_posterior,
            };
            cli_io::run_estimation(&descriptor, &opts)
        }
        Command::Simulate {
            pool,
            winners,
            r,
            coupling,
            reps,
            seed,
            observed_overlap,
            scan,
            out_csv,
            out_scan,
        } => {
            let scan = scan.as_deref().map(cli_io::parse_scan_range).transpose()?;
            let config = SimConfig {
                pool_size: pool,
                winner_count: winners,
                r,
                coupling,
                replications: reps,
                seed,
            };
            cli_io::run_simulation(&SimulateOptions {
                config,
                observed_overlap,
                scan,
                out_csv,
                out_scan,
            })
        }
        Command::Thresholds { descriptor } => cli_io::run_thresholds(&descriptor),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(report.to_json().as_bytes()).is_err() {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", cli_io::error_line(&e));
            ExitCode::from(cli_io::exit_code(&e) as u8)
        }
    }
}
