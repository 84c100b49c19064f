mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// One-shot trajectory learning pipeline.
#[derive(Parser, Debug)]
#[command(name = "ostl", version)]
struct Cli {
    /// Default location for trajectories, datasets and models.
    #[arg(long, global = true, env = "OSTL_DATA_DIR", default_value = "ostl-data")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Propagate reference trajectories for every grid point.
    Generate(commands::GenerateArgs),
    /// Flatten trajectories into a split dataset file.
    BuildDataset(commands::BuildDatasetArgs),
    /// Train the network on a dataset file.
    Train(commands::TrainArgs),
    /// Predict one trajectory and write it as CSV.
    Predict(commands::PredictArgs),
    /// Error reports on the test split.
    Evaluate(commands::EvaluateArgs),
    /// Single-thread prediction latency.
    Bench(commands::BenchArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let dir = cli.data_dir;
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&dir, a),
        Command::BuildDataset(a) => commands::build_dataset(&dir, a),
        Command::Train(a) => commands::train(&dir, a),
        Command::Predict(a) => commands::predict(&dir, a),
        Command::Evaluate(a) => commands::evaluate(&dir, a),
        Command::Bench(a) => commands::bench(&dir, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 3 for numeric failures, 2 for everything else that reaches here.
fn exit_code(e: &anyhow::Error) -> u8 {
    let numeric = e
        .chain()
        .any(|c| matches!(c.downcast_ref::<ostl::Error>(), Some(ostl::Error::NonFinite { .. })));
    if numeric {
        3
    } else {
        2
    }
}
