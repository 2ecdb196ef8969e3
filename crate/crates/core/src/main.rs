use clap::Parser;
use memproc::cli::{run, Args};

fn main() {
    std::process::exit(run(&Args::parse()));
}
