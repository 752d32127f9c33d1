use clap::Parser;
use tracing::Level;

use oasis_cli::{execute, exit_code, Cli};

fn main() {
    let level = match std::env::var("OASIS_LOG").as_deref() {
        Ok("debug") => Level::DEBUG,
        Ok("warn") => Level::WARN,
        Ok("error") => Level::ERROR,
        _ => Level::INFO,
    };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    if let Err(err) = execute(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}
