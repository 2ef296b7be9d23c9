use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use paraccel_cli::{parse_config, run_config, CliError, CliResult, Mode, RunReport};

#[derive(Parser)]
#[command(name = "paraccel", version, about = "Parallel convex optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize one instance with one method.
    Solve(RunArgs),
    /// Play games against the resampling adversary.
    Game(RunArgs),
    /// Sweep methods over dimensions and accuracies.
    Bench(RunArgs),
    /// Run the invariant suite.
    Verify(RunArgs),
    /// Re-check a saved game transcript.
    Replay {
        transcript: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to `output.dir` in the config, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for bench sweeps.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn execute(mode: Mode, args: &RunArgs) -> CliResult<RunReport> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut config = parse_config(&text)?;
    if config.mode != mode {
        return Err(CliError::schema(
            "mode",
            format!("config is for `{}` but the `{}` subcommand was used", config.mode.name(), mode.name()),
        ));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = match (&args.out, config.output_dir()) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("out"),
    };
    run_config(&config, &out, args.jobs.max(1))
}

fn report(result: CliResult<RunReport>) -> ExitCode {
    match result {
        Ok(report) => {
            println!("{} finished in {:.2}s: {:?}", report.mode, report.wall_clock_s, report.outcome);
            ExitCode::from(report.outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Solve(a) => report(execute(Mode::Solve, a)),
        Command::Game(a) => report(execute(Mode::Game, a)),
        Command::Bench(a) => report(execute(Mode::Bench, a)),
        Command::Verify(a) => report(execute(Mode::Verify, a)),
        Command::Replay { transcript, out } => report(paraccel_cli::run::run_replay(transcript, out)),
    }
}
