//! Thin CLI over the library: `run <config>`, `verify <suite>`,
//! `plot <csv> <out>`. Exit codes: 0 all checks passed, 1 any failure,
//! 2 configuration problems.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use socdiffuse::experiments::{plot_trajectories_csv, run_experiment, verify_suite, ExperimentConfig, SUITE_NAMES};
use socdiffuse::Error;

#[derive(Parser)]
#[command(name = "socdiffuse", about = "Controlled reverse-diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the seed list with a single seed (takes precedence over the
    /// SEED environment variable).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory override.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for seed batches.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Run a named verification suite.
    Verify { suite: String },
    /// Plot the terminal-cost column of an emitted trajectories CSV.
    Plot { csv: PathBuf, out: PathBuf },
}

fn effective_seed(flag: Option<u64>) -> Result<Option<u64>, Error> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("SEED") {
        Ok(v) => v
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("SEED environment variable: cannot parse \"{v}\""))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli) -> Result<bool, Error> {
    let seed = effective_seed(cli.seed)?;
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.override_seed(s);
            }
            if let Some(dir) = cli.out_dir {
                cfg.override_out_dir(dir);
            }
            if let Some(t) = cli.threads {
                if t == 0 {
                    return Err(Error::Config("--threads must be positive".into()));
                }
                cfg.override_threads(t);
            }
            let report = run_experiment(&cfg)?;
            print!("{}", report.summary());
            Ok(report.all_passed())
        }
        Command::Verify { suite } => {
            if !SUITE_NAMES.contains(&suite.as_str()) {
                return Err(Error::Config(format!(
                    "unknown suite \"{suite}\"; known suites: {}",
                    SUITE_NAMES.join(", ")
                )));
            }
            let out_dir = cli.out_dir.unwrap_or_else(|| PathBuf::from("out"));
            let report = verify_suite(&suite, seed.unwrap_or(0), &out_dir)?;
            print!("{}", report.summary());
            Ok(report.all_passed())
        }
        Command::Plot { csv, out } => {
            let path = plot_trajectories_csv(&csv, &out)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
