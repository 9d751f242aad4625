use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lyapunov_lab::cli::{list_cases, list_models, load_config, run_experiment, Overrides};

#[derive(Parser)]
#[command(name = "lyaplab", version, about = "Run Lyapunov stability experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (overrides `threads`).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Models, diffusions and surfaces known by name.
    ListModels,
    /// Monte Carlo validation cases.
    ListCases,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match cli.command {
        Cmd::ListModels => {
            list_models().iter().for_each(|l| println!("{l}"));
            ExitCode::SUCCESS
        }
        Cmd::ListCases => {
            list_cases().iter().for_each(|l| println!("{l}"));
            ExitCode::SUCCESS
        }
        Cmd::Run {
            config,
            out,
            seed,
            threads,
        } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            Overrides { out, seed, threads }.apply(&mut cfg);
            match run_experiment(&cfg) {
                Ok(outcome) => {
                    println!("{}", outcome.summary());
                    for a in outcome.report.assertions.iter().filter(|a| !a.pass) {
                        println!("  FAILED {}: {} > {}", a.name, a.lhs, a.rhs);
                    }
                    ExitCode::from(outcome.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
