use std::process::ExitCode;

use clap::Parser;
use polya::cli::{run, Cli};

fn main() -> ExitCode {
    run(Cli::parse())
}
