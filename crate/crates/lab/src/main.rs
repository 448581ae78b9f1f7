use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use l1bsde_lab::{run_to_dir, suites, verify, ExperimentConfig, RunError, VerifyError};

#[derive(Parser)]
#[command(name = "l1bsde", version, about = "Seeded lattice experiments for L1 BSDEs, reflected BSDEs and 2BSDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: Option<PathBuf>,
        /// Run instances on this many threads.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the registered experiment names and exit.
        #[arg(long)]
        list: bool,
    },
    /// Re-check a CSV report.
    Verify { csv: PathBuf },
}

fn run(config: Option<PathBuf>, parallel: usize, out: Option<PathBuf>, list: bool) -> ExitCode {
    if list {
        for name in suites::names() {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    let Some(path) = config else {
        eprintln!("error: a config path is required unless --list is given");
        return ExitCode::from(2);
    };
    let result = ExperimentConfig::load(&path).map_err(RunError::from).and_then(|cfg| {
        let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
        run_to_dir(&cfg, parallel.max(1), &dir)
    });
    match result {
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Ok((output, csv)) => {
            let s = &output.summary;
            println!("{}: {} rows, {} passed, {} failed -> {}", s.experiment, s.rows, s.passed, s.failed, csv.display());
            if output.all_passed() {
                ExitCode::SUCCESS
            } else {
                for r in output.rows.iter().filter(|r| !r.pass) {
                    eprintln!("FAIL {} instance {} {} [{}] value {:?} bound {:?}", r.experiment, r.instance, r.quantity, r.param, r.value, r.bound);
                }
                ExitCode::from(1)
            }
        }
    }
}

fn check(csv: PathBuf) -> ExitCode {
    match verify(&csv) {
        Err(e @ (VerifyError::Io(..) | VerifyError::Malformed(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Ok(outcome) => {
            for line in &outcome.inconsistent {
                eprintln!("inconsistent: {line}");
            }
            println!(
                "{}: {} rows, {} failed, {} inconsistent",
                csv.display(),
                outcome.rows,
                outcome.failed_rows,
                outcome.inconsistent.len()
            );
            if outcome.ok() { ExitCode::SUCCESS } else { ExitCode::from(1) }
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, parallel, out, list } => run(config, parallel, out, list),
        Command::Verify { csv } => check(csv),
    }
}
