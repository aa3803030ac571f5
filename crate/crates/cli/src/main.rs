use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fairbfl::report::{build_preset, parse_config, run_config, run_preset, ExperimentOutcome, PresetName, OUT_DIR_ENV};
use fairbfl::ExecPolicy;

#[derive(Parser)]
#[command(name = "fairbfl", version, about = "Blockchain-coupled federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation.
    Run(Common),
    /// Run a named experiment preset.
    Preset {
        /// general, lr_sweep, worker_sweep, miner_sweep, discard_vs_keep or security
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file layered over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
    /// Run everything on one thread.
    #[arg(long)]
    sequential: bool,
    /// Config overrides such as `rounds=20` or `hp.eta=0.05`.
    overrides: Vec<String>,
}

impl Common {
    fn exec(&self) -> ExecPolicy {
        if self.sequential {
            ExecPolicy::Sequential
        } else {
            ExecPolicy::Parallel
        }
    }
}

fn print(outcome: &ExperimentOutcome) {
    println!(
        "{:<28} {:>6} {:>10} {:>8} {:>8} {:>6}",
        "run", "rounds", "avg_delay", "avg_acc", "final", "conv"
    );
    for s in &outcome.summaries {
        let conv = s.convergence_round.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
        println!(
            "{:<28} {:>6} {:>10.4} {:>8.4} {:>8.4} {:>6}",
            s.label, s.rounds, s.avg_delay, s.avg_accuracy, s.final_accuracy, conv
        );
    }
    if let Some(sec) = &outcome.security {
        for (label, avg) in sec.averages() {
            match avg {
                Some(a) => println!("{label}: average detection rate {:.2}%", a * 100.0),
                None => println!("{label}: no attacked rounds"),
            }
        }
    }
    for f in &outcome.failures {
        eprintln!("run {} failed: {}", f.label, f.error);
    }
    println!("outputs in {}", outcome.dir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(c) => parse_config(c.config.as_deref(), &c.overrides)
            .context("invalid configuration")
            .and_then(|cfg| run_config(cfg, &c.out, c.exec()).context("run failed")),
        Command::Preset { name, common: c } => name
            .parse::<PresetName>()
            .and_then(|p| build_preset(p, c.config.as_deref(), &c.overrides))
            .context("invalid preset configuration")
            .and_then(|p| run_preset(&p, &c.out, c.exec()).context("preset failed")),
    };
    match result {
        Ok(outcome) => {
            print(&outcome);
            if outcome.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
