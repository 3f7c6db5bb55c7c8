use std::process::ExitCode;

use clap::Parser;
use motorgraph_cli::{run, Cli, THREADS_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let built = value
            .trim()
            .parse::<usize>()
            .map_err(|e| e.to_string())
            .and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().map_err(|e| e.to_string()));
        if let Err(e) = built {
            eprintln!("error: cli: {THREADS_ENV}={value}: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(Some(stdout)) => {
            println!("{stdout}");
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
