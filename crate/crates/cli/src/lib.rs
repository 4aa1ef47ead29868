//! Command-line experiment runner: parses TOML configs, runs the numerical
//! routines and writes CSV data with JSON sidecars.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod output;
pub mod run;

use std::path::PathBuf;

use clap::Parser;

pub use config::{parse_config, Command, ExperimentConfig};
pub use run::{run, RunError};

#[derive(Debug, Parser)]
#[command(
    name = "nhsync",
    version,
    about = "Synchronization experiments for non-Hermitian oscillator networks"
)]
pub struct Cli {
    /// Experiment to run; must match `command` in the config if present.
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory (overrides `output` in the config).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads, 0 for one per core.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub threads: usize,
}

/// Run the CLI and return the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return 3;
        }
    };
    let mut cfg = match parse_config(&text, Some(cli.command)) {
        Ok(c) => c,
        Err(e) => {
            eprint!("error: {e}");
            return 1;
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 2;
        }
    };
    let threads = pool.current_num_threads();
    match pool.install(|| run(&cfg, &out, threads)) {
        Ok(w) => {
            println!("wrote {}", w.csv.display());
            println!("wrote {}", w.summary.display());
            println!("wrote {}", w.meta.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
