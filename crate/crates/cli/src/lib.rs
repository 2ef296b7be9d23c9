//! Command-line driver: configuration, experiment runners, the verify suite and artifact
//! writers behind the `paraccel` binary.

pub mod bench;
pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod suite;

use std::path::Path;

pub use config::{parse_config, ExperimentConfig, Mode};
pub use error::{CliError, CliResult};
pub use run::{Outcome, RunReport};

/// Validates `config` and runs its mode, writing artifacts under `out`.
pub fn run_config(config: &ExperimentConfig, out: &Path, jobs: usize) -> CliResult<RunReport> {
    config.validate()?;
    match config.mode {
        Mode::Solve => run::run_solve(config, out),
        Mode::Game => run::run_game_mode(config, out),
        Mode::Bench => bench::run_bench(config, out, jobs),
        Mode::Verify => suite::run_verify(config, out),
    }
}
