use std::path::PathBuf;
use std::process::ExitCode;

use cdac_cli::{config, run, CliError, Scope};
use clap::{Args, Parser, Subcommand};

/// Solve, approximate, simulate and compare active-sensing policies.
#[derive(Parser)]
#[command(name = "cdac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Cap on worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact value iteration: value and policy tables plus rasters.
    Solve(RunArgs),
    /// RBF or GPR approximate solve, model file and agreement report.
    Approx(RunArgs),
    /// Monte-Carlo batch of one policy.
    Simulate(RunArgs),
    /// Side-by-side batches of several policies over switch costs.
    Compare(RunArgs),
    /// Policy table and rasters of C-DAC, a baseline or a saved model.
    ExportPolicy(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    config: PathBuf,

    /// Override a config value; repeatable, applied in order.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scope, args) = match cli.command {
        Command::Solve(a) => (Scope::Solve, a),
        Command::Approx(a) => (Scope::Approx, a),
        Command::Simulate(a) => (Scope::Simulate, a),
        Command::Compare(a) => (Scope::Compare, a),
        Command::ExportPolicy(a) => (Scope::ExportPolicy, a),
    };
    let result = set_threads(cli.threads)
        .and_then(|_| config::load(&args.config, &args.set))
        .and_then(|cfg| run(scope, cfg, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    match threads {
        None => Ok(()),
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}
