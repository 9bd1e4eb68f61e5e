use clap::Parser;

use brex::cli::{self, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("BREX_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
    }
    let args = Cli::parse();
    if let Err(e) = cli::run(args) {
        eprintln!("brex: {e}");
        std::process::exit(e.code);
    }
}
