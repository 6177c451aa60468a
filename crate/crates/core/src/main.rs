use std::process::ExitCode;

use clap::Parser;
use ivf_rabitq::cli::{run, Cli};

fn main() -> ExitCode {
    if let Some(n) = std::env::var("IVRQ_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .expect("global thread pool already initialized");
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
