//! `ehd`: data preparation, training, distillation and evaluation.

mod commands;
mod context;
mod error;
mod keys;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use ehd_core::eval::Task;

use commands::Case;
use context::{Context, Options};
use error::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "ehd",
    version,
    about = "Explainable history distillation for marked event sequences"
)]
struct Cli {
    /// Workspace root; every configured path is relative to it.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Overrides one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Worker threads for per-item fan-out.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Limit {
    /// Evaluate only the first N instances (sets eval.limit).
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Dppl,
    Card,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Dppl => Task::DpplDiff,
            TaskArg::Card => Task::CardDiff,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a raw event file, cut sliding windows and write the splits.
    PrepData,
    /// Simulate planted-cause Hawkes sequences as a raw event file.
    SynthGen,
    /// Train the intensity model on the train split.
    TrainMtpp,
    /// Train the selection model against the frozen intensity model.
    TrainDistiller {
        /// full, lc-only or ln-only (sets distiller.loss).
        #[arg(long)]
        loss: Option<String>,
    },
    /// Distill every evaluation instance and write the selections.
    Distill(Limit),
    /// DPPL-Diff of CHD, greedy search and random deletion.
    EvalDppl(Limit),
    /// Card-Diff of CHD, greedy search and random deletion.
    EvalCard(Limit),
    /// Wall-clock comparison of the three methods.
    Timing {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[command(flatten)]
        limit: Limit,
    },
    /// Mark percentages, length and shift statistics, or the left-fraction trace.
    #[command(group(ArgGroup::new("case").required(true).args(["marks", "shift", "left_fraction"])))]
    CaseStudy {
        #[arg(long)]
        marks: bool,
        #[arg(long)]
        shift: bool,
        #[arg(long)]
        left_fraction: bool,
        #[command(flatten)]
        limit: Limit,
    },
    /// Finite-difference check of every differentiable primitive.
    GradCheck,
    /// Print every configuration key and subcommand flag.
    Reference,
}

fn reference() -> String {
    let mut s = String::from("# ehd reference\n\n## Configuration keys\n\n");
    s.push_str(
        "Resolution order: defaults, then `--config FILE`, then `EHD_*` environment variables, then `--set`. \
         Keys marked `-` are derived from the data or from `seed` when unset.\n\n",
    );
    s.push_str(&keys::reference_table());
    s.push_str("\n## Commands\n");
    let mut cmd = Cli::command();
    s.push_str(&format!("\n```\n{}\n```\n", cmd.render_long_help()));
    for sub in cmd.get_subcommands_mut() {
        let name = sub.get_name().to_string();
        s.push_str(&format!("\n### {name}\n\n```\n{}\n```\n", sub.render_long_help()));
    }
    s
}

fn run(cli: Cli) -> Result<()> {
    let mut extra: Vec<(&str, String)> = Vec::new();
    let limit = match &cli.command {
        Command::Distill(l) | Command::EvalDppl(l) | Command::EvalCard(l) => l.limit,
        Command::Timing { limit, .. } | Command::CaseStudy { limit, .. } => limit.limit,
        _ => None,
    };
    if let Some(n) = limit {
        extra.push(("eval.limit", n.to_string()));
    }
    if let Command::TrainDistiller { loss: Some(l) } = &cli.command {
        extra.push(("distiller.loss", l.clone()));
    }
    if let Command::Reference = cli.command {
        print!("{}", reference());
        return Ok(());
    }
    let opts = Options {
        root: cli.root,
        config: cli.config,
        set: cli.set,
        workers: cli.workers,
        force: cli.force,
    };
    let mut ctx = Context::resolve(&opts, std::env::vars(), &extra)?;
    match cli.command {
        Command::PrepData => commands::prep_data(&mut ctx),
        Command::SynthGen => commands::synth_gen(&mut ctx),
        Command::TrainMtpp => commands::train_mtpp_cmd(&mut ctx),
        Command::TrainDistiller { .. } => commands::train_distiller_cmd(&mut ctx),
        Command::Distill(_) => commands::distill_cmd(&mut ctx),
        Command::EvalDppl(_) => commands::eval_cmd(&mut ctx, Task::DpplDiff),
        Command::EvalCard(_) => commands::eval_cmd(&mut ctx, Task::CardDiff),
        Command::Timing { task, .. } => commands::timing_cmd(&mut ctx, task.into()),
        Command::CaseStudy { marks, shift, .. } => {
            let case = if marks {
                Case::Marks
            } else if shift {
                Case::Shift
            } else {
                Case::LeftFraction
            };
            commands::case_study(&mut ctx, case)
        }
        Command::GradCheck => commands::grad_check(&mut ctx),
        Command::Reference => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::Usage(first.to_string()).line());
            return ExitCode::from(2);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
