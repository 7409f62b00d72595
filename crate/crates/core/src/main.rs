use clap::Parser;

use lidar_layout::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
