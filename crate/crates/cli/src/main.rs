use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use heavyball_cli::config::{ExperimentKind, Overrides};
use heavyball_cli::run_command;

#[derive(Debug, Parser)]
#[command(name = "heavyball", version, about = "Heavy-ball momentum envelope experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps [default: available parallelism].
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Envelope certification on quadratics over a condition-number grid.
    Quadratic,
    /// Local envelope certification on smooth strongly convex test functions.
    F2Local,
    /// Two-layer ReLU training with residual and activation-pattern diagnostics.
    Relu,
    /// Deep linear network training with residual and layer-drift diagnostics.
    DeepLinear,
    /// Matrix-power bound certificates for the linear heavy-ball map.
    BoundCheck,
    /// One experiment over a grid of parameters and seeds, in parallel.
    Sweep,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Quadratic => ExperimentKind::Quadratic,
            Command::F2Local => ExperimentKind::F2Local,
            Command::Relu => ExperimentKind::Relu,
            Command::DeepLinear => ExperimentKind::DeepLinear,
            Command::BoundCheck => ExperimentKind::BoundCheck,
            Command::Sweep => ExperimentKind::Sweep,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let overrides = Overrides { seed: cli.seed, output_dir: cli.out.clone() };
    match run_command(cli.command.kind(), cli.config.as_ref(), &overrides, workers) {
        Ok(record) => {
            println!("{}: {:?} -> {}", cli.command.kind(), record.outcome.status, record.dir.display());
            for (name, value) in &record.outcome.metrics {
                println!("  {name} = {}", heavyball::report::fmt_float(*value));
            }
            ExitCode::from(record.outcome.status.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
