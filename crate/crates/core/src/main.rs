mod cli;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = cli::Cli::parse();
    if let Err(failure) = cli::run(args) {
        eprintln!("error: {failure}");
        std::process::exit(failure.code);
    }
}
