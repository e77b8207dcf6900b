use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lobfactor_cli::commands::with_workers;
use lobfactor_cli::{
    cmd_experiment, cmd_metrics, cmd_simulate, CliError, ExperimentArgs, MetricsArgs, RunConfig,
};
use lobfactor_core::calibration::ScenarioSpec;

#[derive(Parser)]
#[command(
    name = "lobfactor",
    version,
    about = "Agent-based order-book simulator and tail-realism calibration"
)]
struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Trial seed (base seed for experiments); overrides the config.
    #[arg(long, global = true, env = "LOBFACTOR_SEED")]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial and write ticks, bars and volumes.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Per-minute transaction count CSVs; a synthetic pool otherwise.
        #[arg(long)]
        paths: Vec<PathBuf>,
    },
    /// Tail metrics of bar files against reference bars.
    Metrics {
        #[arg(required = true)]
        bars: Vec<PathBuf>,
        /// Reference bar files, one dataset each; Student-t sets otherwise.
        #[arg(long)]
        refs: Vec<PathBuf>,
        /// Volume files aligned with the bar files.
        #[arg(long)]
        volumes: Vec<PathBuf>,
        /// Tail size; 5 % of the returns by default.
        #[arg(long)]
        tail_k: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate scenarios over the parameter grid.
    Experiment {
        /// "all" or a comma-separated list such as "0,2".
        #[arg(long, default_value = "all")]
        scenarios: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        refs: Vec<PathBuf>,
        #[arg(long)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Reuse combos already recorded in the output ledger.
        #[arg(long)]
        resume: bool,
        /// Also write the lambda_c sweep (evaluates scenarios 0, 1, 2 and 4).
        #[arg(long)]
        sweep: bool,
    },
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let trials = match &cli.command {
        Some(Command::Experiment { trials, .. }) => *trials,
        _ => None,
    };
    let config = RunConfig::load(cli.config.as_deref())?.with_overrides(cli.seed, trials)?;
    if cli.print_config {
        println!("{}", config.to_json_pretty());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Config("no subcommand given; see --help".into()));
    };
    let line = command_line();
    with_workers(cli.workers, move || match command {
        Command::Simulate { out, paths } => {
            let done = cmd_simulate(&config, &paths, &out, &line)?;
            eprintln!("{} trades; outputs in {}", done.n_trades, out.display());
            Ok(())
        }
        Command::Metrics {
            bars,
            refs,
            volumes,
            tail_k,
            out,
        } => {
            let args = MetricsArgs {
                bars,
                refs,
                volumes,
                tail_k,
                out,
            };
            let report = cmd_metrics(&config, &args, &line)?;
            for m in &report.inputs {
                eprintln!("{}: hill {:.4}, mean OT {:.6}", m.path, m.hill, m.mean_ot);
            }
            Ok(())
        }
        Command::Experiment {
            scenarios,
            refs,
            paths,
            out,
            resume,
            sweep,
            ..
        } => {
            let args = ExperimentArgs {
                scenarios: ScenarioSpec::parse_list(&scenarios)?,
                refs,
                paths,
                out,
                resume,
                sweep,
            };
            let done = cmd_experiment(&config, &args, &line)?;
            for row in &done.report.table2 {
                eprintln!(
                    "scenario {}: hill {:.3}, mean OT {:.6} (alpha {}, lambda_c {})",
                    row.scenario_no, row.hill, row.mean_ot, row.alpha, row.lambda_c
                );
            }
            Ok(())
        }
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lobfactor: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
