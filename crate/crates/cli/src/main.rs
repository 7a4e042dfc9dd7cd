//! Binary entry point: parse flags, run the command, map errors to exit
//! codes (2 input, 3 numerical, 4 non-convergence).

use clap::Parser;
use dprisk_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
