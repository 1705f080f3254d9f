use std::path::PathBuf;
use std::process::ExitCode;

use adabatch::commands::{cmd_audit, cmd_gen_data, cmd_run, cmd_sweep, parse_grid_arg};
use adabatch::config::{self, ConfigError};
use adabatch::Failure;
use clap::{Args, Parser, Subcommand};

/// Adaptive batch-size training runs, sweeps and diagnostics audits.
#[derive(Parser)]
#[command(name = "adabatch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable and applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train once.
    Run(Common),
    /// Train every cell of a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid axis `key=v1,v2,...`; repeatable.
        #[arg(long = "grid", value_name = "KEY=V1,V2")]
        grid: Vec<String>,
        /// Cells run concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Check gradients and the variance conditions on the configured problem.
    Audit(Common),
    /// Write the configured synthetic dataset as CSV.
    GenData(Common),
}

fn load(common: &Common) -> Result<config::Config, ConfigError> {
    config::load(common.config.as_deref(), &common.set)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run(c) => {
            let cfg = load(&c)?;
            let s = cmd_run(&cfg, &c.out)?;
            println!(
                "steps={} avg_bsz={:.2} final_loss={:.6} out={}",
                s.steps,
                s.avg_batch_size,
                s.final_train_loss,
                c.out.display()
            );
        }
        Command::Sweep {
            common,
            grid,
            parallel,
        } => {
            let cfg = load(&common)?;
            let grid = grid
                .iter()
                .map(|g| parse_grid_arg(g))
                .collect::<Result<Vec<_>, _>>()?;
            let cells = cmd_sweep(&cfg, &grid, &common.out, parallel)?;
            let failed: Vec<String> = cells
                .iter()
                .filter(|c| c.result.is_err())
                .map(|c| c.dir.display().to_string())
                .collect();
            println!(
                "{} cells, {} failed, summary in {}",
                cells.len(),
                failed.len(),
                common.out.join("summary.csv").display()
            );
            if !failed.is_empty() {
                return Err(Failure::Runtime(anyhow::anyhow!(
                    "failed cells: {}",
                    failed.join(", ")
                )));
            }
        }
        Command::Audit(c) => {
            let cfg = load(&c)?;
            let report = cmd_audit(&cfg, &c.out)?;
            println!(
                "audit passed ({} checks), report in {}",
                report.checks.len(),
                c.out.join("audit.json").display()
            );
        }
        Command::GenData(c) => {
            let cfg = load(&c)?;
            for p in cmd_gen_data(&cfg, &c.out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
