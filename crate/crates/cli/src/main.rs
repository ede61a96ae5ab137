use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contactdd_cli::{run_experiment, tables, CliError, ExperimentConfig};

/// Robin domain decomposition experiments for elastic contact.
#[derive(Parser)]
#[command(name = "contactdd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every point of an experiment configuration.
    Run {
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Override the number of concurrent sweep points.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Rebuild table.csv and table.md from a finished run.
    Tables { dir: PathBuf },
    /// Collect all contact traces of a run into contact_traces.csv.
    Trace { dir: PathBuf },
    /// Check a configuration and list its sweep points without running.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, output, jobs } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = output {
                cfg.output = o;
            }
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            cfg.validate(&config)?;
            let res = run_experiment(&cfg)?;
            print!("{}", tables::markdown(&res.points));
            let failed = res.points.iter().filter(|p| !p.result.converged).count();
            if failed > 0 {
                eprintln!("{failed} of {} points stopped at max_iter", res.points.len());
            }
            println!("results in {}", res.output.display());
        }
        Command::Tables { dir } => {
            let pts = contactdd_cli::run::read_summaries(&dir)?;
            tables::write_tables(&dir, &pts)?;
            print!("{}", tables::markdown(&pts));
        }
        Command::Trace { dir } => {
            println!("{}", tables::combine_traces(&dir)?.display());
        }
        Command::Check { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            for p in cfg.expand()? {
                println!("{} robin={:.6e} delta={:.6e} tol={:e}", p.tag, p.dd.robin, p.dd.delta, p.dd.tol);
            }
        }
    }
    Ok(())
}
