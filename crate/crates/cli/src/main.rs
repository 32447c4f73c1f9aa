use std::process::ExitCode;

use clap::Parser;
use qcc_cli::{run, Cli, OUT_DIR_ENV};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_dir = std::env::var_os(OUT_DIR_ENV).map(Into::into);
    match run(cli, env_dir, &mut std::io::stdout().lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
