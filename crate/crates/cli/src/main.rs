use std::process::ExitCode;

use clap::Parser;
use gfm_cli::{execute, Cli};

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).format_timestamp(None).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::from(gfm_cli::error::exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
