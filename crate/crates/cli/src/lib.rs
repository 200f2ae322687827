//! Reproducible experiment runner for the immse identity suite.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Diagnostic, ExperimentConfig};
pub use run::{Outcome, RunError};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CHECK_FAILED: i32 = 1;
    pub const INVALID_CONFIG: i32 = 2;
    pub const COMPUTE_FAILED: i32 = 3;
}

#[derive(Debug, Parser)]
#[command(
    name = "immse",
    version,
    about = "I-MMSE identity simulations on the Gaussian channel"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Mutual information and MMSE over the rho grid.
    Sweep,
    /// Identity battery at every rho; exit 1 if any check fails.
    Verify,
    /// Causal identities across resolutions in `convergence.n_list`.
    Convergence,
}

/// Parses the config, runs the command, and returns the exit code.
/// Diagnostics go to stderr.
pub fn execute(cli: &Cli) -> i32 {
    let Some(path) = &cli.config else {
        eprintln!("error: --config is required");
        return exit::INVALID_CONFIG;
    };
    let default_seed = match std::env::var(config::SEED_ENV) {
        Ok(s) => match s.trim().parse() {
            Ok(v) => Some(v),
            Err(_) => {
                eprintln!(
                    "error: {} must be an unsigned integer, got {s:?}",
                    config::SEED_ENV
                );
                return exit::INVALID_CONFIG;
            }
        },
        Err(_) => None,
    };
    let cfg = match config::load(path, cli.seed, default_seed) {
        Ok(c) => c,
        Err(d) => {
            eprintln!("config error: {}: {d}", path.display());
            return exit::INVALID_CONFIG;
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    let go = || match cli.command {
        Command::Sweep => run::cmd_sweep(&cfg, &out),
        Command::Verify => run::cmd_verify(&cfg, &out),
        Command::Convergence => {
            if cfg.n_list.is_none() {
                return Err(RunError::Usage(
                    "convergence needs a [convergence] n_list".into(),
                ));
            }
            run::cmd_convergence(&cfg, &out)
        }
    };
    let result = match cli.threads {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(go),
            Err(e) => {
                eprintln!("error: cannot build thread pool: {e}");
                return exit::COMPUTE_FAILED;
            }
        },
        None => go(),
    };
    match result {
        Ok(o) => {
            for f in &o.files {
                println!("wrote {}", f.display());
            }
            if o.all_passed {
                exit::OK
            } else {
                eprintln!("one or more identity checks failed");
                exit::CHECK_FAILED
            }
        }
        Err(RunError::Usage(m)) => {
            eprintln!("config error: {m}");
            exit::INVALID_CONFIG
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit::COMPUTE_FAILED
        }
    }
}
