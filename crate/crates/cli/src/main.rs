use std::process::ExitCode;

use clap::Parser;

use spectral_shrinkage_cli::cli::{Cli, Command};
use spectral_shrinkage_cli::commands;

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(args) => println!("{}", commands::simulate(&args)?),
        Command::Estimate(args) => {
            for path in commands::estimate(&args)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Connectivity(args) => {
            let (paths, rejected) = commands::connectivity(&args)?;
            for path in paths {
                println!("wrote {}", path.display());
            }
            if args.inputs.len() == 2 {
                println!("{rejected} test(s) rejected after BH-FDR");
            }
        }
        Command::Compare(args) => {
            let (paths, summary) = commands::compare(&args)?;
            print!("{summary}");
            for path in paths {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
