use clap::Parser;

use regret_synth::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
