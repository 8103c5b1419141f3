//! `coembed` command-line driver.
//!
//! Exit codes: 0 success, 1 input or runtime error, 2 gradient check failed.

mod commands;
mod config;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coembed::numkernel::OpKind;

use commands::SweepParam;
use config::{Overrides, RunConfig, Task};

#[derive(Parser)]
#[command(name = "coembed", version, about = "Semi-supervised co-embedding of attributed networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a label mask, train, write checkpoint, log and embeddings.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Suppress per-epoch progress lines.
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        over: Overrides,
    },
    /// Evaluate the checkpoint in the run's output directory.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Which evaluation to run: class, attr or link.
        #[arg(value_enum)]
        eval_task: Task,
        #[command(flatten)]
        over: Overrides,
    },
    /// Write a planted-partition network (three data files + meta.json).
    Synth {
        /// JSON SBM settings; defaults to the 200-node, 4-community fixture.
        #[arg(long)]
        sbm: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of backward() on the bundled 8-node fixture.
    Gradcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt one op's backward rule (mutation test).
        #[arg(long, hide = true)]
        fault: Option<OpKind>,
    },
    /// Train and evaluate once per value of alpha, beta or tau.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Tasks to score per value (default: the config's task).
        #[arg(long, value_enum, value_delimiter = ',')]
        tasks: Vec<Task>,
        /// Values trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        over: Overrides,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Command::Train { config, quiet, over } => {
            let cfg = RunConfig::resolve(config.as_deref(), &over)?;
            commands::cmd_train(&cfg, quiet)?;
        }
        Command::Eval {
            config,
            eval_task,
            over,
        } => {
            let cfg = RunConfig::resolve(config.as_deref(), &over)?;
            commands::cmd_eval(&cfg, eval_task)?;
        }
        Command::Synth { sbm, seed, out } => {
            commands::cmd_synth(sbm.as_deref(), seed, &out)?;
        }
        Command::Gradcheck {
            config,
            trials,
            seed,
            fault,
        } => {
            let cfg = match config {
                Some(p) => Some(RunConfig::resolve(Some(&p), &Overrides::default())?),
                None => None,
            };
            let err = commands::cmd_gradcheck(cfg.as_ref(), trials, seed, fault)?;
            if !(err <= commands::GRADCHECK_TOL) {
                eprintln!("gradient check FAILED: {err:.3e} > {:.0e}", commands::GRADCHECK_TOL);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            tasks,
            jobs,
            over,
        } => {
            let cfg = RunConfig::resolve(config.as_deref(), &over)?;
            commands::cmd_sweep(&cfg, param, &values, &tasks, jobs)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors are input errors (1); 2 is reserved for a failed check
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
