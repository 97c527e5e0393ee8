use clap::Parser;
use reluctant_cli::config::{Args, RunConfig};

fn main() {
    let args = Args::parse();
    let result = RunConfig::from_args(&args).and_then(|cfg| reluctant_cli::run(&cfg));
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
