use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use orrlab::config::RunConfig;
use orrlab::{fit, runner, sweep, verify};

#[derive(Parser)]
#[command(name = "orrlab", version, about = "Linearized shear-flow experiments in Lagrangian coordinates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write its outputs.
    Run {
        config: PathBuf,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One run per value of a dotted config parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values, each parsed as JSON when possible.
        #[arg(long, allow_hyphen_values = true, default_value = "")]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Invariant checks; `--full` adds the acceptance runs.
    Verify {
        #[arg(long)]
        full: bool,
    },
    /// Recompute fits on a stored run.
    Fit {
        dir: PathBuf,
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        s: Option<f64>,
    },
}

fn threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ORRLAB_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("ORRLAB_THREADS = {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::from(2)
        }
    }
}

fn real_main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    threads()?;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = runner::execute(&cfg)?;
            let dir = out.unwrap_or_else(|| cfg.output.clone());
            runner::write_outputs(&outcome, &dir)?;
            println!("{}", dir.display());
            if outcome.fatal.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for f in &outcome.fatal {
                    eprintln!("fatal: {f}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Sweep { config, param, values, out } => {
            let cfg = RunConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output.clone());
            let rows = sweep::sweep(&cfg, &param, &sweep::parse_values(&values), &dir)?;
            println!("{}", dir.join("sweep.csv").display());
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Verify { full } => {
            let report = verify::verify(full);
            for c in &report.checks {
                println!("{c}");
            }
            for c in &report.acceptance {
                println!("{c}");
            }
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Fit { dir, window, s } => {
            let window = window.as_deref().map(fit::parse_window).transpose()?;
            let summary = fit::refit(&dir, window, s)?;
            for key in ["decay_alpha_psi", "decay_alpha_dpsi", "gevrey_C_ratio_max"] {
                println!("{key} = {}", summary[key]);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
