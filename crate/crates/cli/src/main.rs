use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use explain_lab_cli::commands::{execute, write_effective_config};
use explain_lab_cli::config::{apply, parse_override, read_file, Assignment, Origin};
use explain_lab_cli::{CliError, Command, RunConfig};

/// Post-hoc (LIME) and jointly learned (CEN) linear explanations.
///
/// Settings come from defaults, then `--config FILE`, then
/// `EXPLAIN_LAB_SEED`, then flags. Config files hold `section.key = value`
/// lines with `#` comments. Every run writes `effective-config` into the
/// output directory; passing it back with `--config` reproduces the run.
#[derive(Debug, Parser)]
#[command(name = "explain-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Output directory (`run.output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed base (`run.seed`).
    #[arg(long, global = true, env = "EXPLAIN_LAB_SEED")]
    seed: Option<String>,

    /// Override any key, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Load the dataset, build feature views and write a summary.
    Prepare,
    /// Train one model and write a checkpoint, log and metrics.
    Train {
        /// Model kind: lr, mlp, moe or cen (`model.kind`).
        #[arg(long)]
        kind: Option<String>,
    },
    /// Fit a LIME explanation of a trained model around one test instance.
    Explain {
        /// Checkpoint to explain (`explain.model`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Test-split row (`explain.instance`).
        #[arg(long)]
        instance: Option<String>,
    },
    /// Run an experiment sweep and write its report.
    Sweep {
        /// noise, features, samples, table or convergence.
        #[arg(value_name = "EXPERIMENT")]
        name: Option<String>,
        /// Same as the positional argument (`sweep.experiment`).
        #[arg(long, conflicts_with = "name")]
        experiment: Option<String>,
        /// Concurrent trials (`sweep.jobs`).
        #[arg(long)]
        jobs: Option<String>,
    },
    /// Summarize a sweep report CSV.
    Report {
        /// Report CSV (`report.input`).
        #[arg(value_name = "CSV")]
        input: Option<PathBuf>,
    },
}

fn flag(key: &str, value: impl Into<String>, name: &str) -> Assignment {
    let value = value.into();
    Assignment {
        key: key.into(),
        origin: Origin::Flag(format!("--{name} {value}")),
        value,
    }
}

fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let mut flags = Vec::new();
    let command = match cli.command {
        Cmd::Prepare => Command::Prepare,
        Cmd::Train { kind } => {
            flags.extend(kind.map(|k| flag("model.kind", k, "kind")));
            Command::Train
        }
        Cmd::Explain { model, instance } => {
            flags.extend(model.map(|m| flag("explain.model", m.display().to_string(), "model")));
            flags.extend(instance.map(|i| flag("explain.instance", i, "instance")));
            Command::Explain
        }
        Cmd::Sweep { name, experiment, jobs } => {
            flags.extend(name.or(experiment).map(|e| flag("sweep.experiment", e, "experiment")));
            flags.extend(jobs.map(|j| flag("sweep.jobs", j, "jobs")));
            Command::Sweep
        }
        Cmd::Report { input } => {
            flags.extend(input.map(|p| flag("report.input", p.display().to_string(), "input")));
            Command::Report
        }
    };
    flags.extend(cli.out.map(|o| flag("run.output", o.display().to_string(), "out")));
    flags.extend(cli.seed.map(|s| flag("run.seed", s, "seed")));
    for s in &cli.set {
        flags.push(parse_override(s)?);
    }

    let mut config = RunConfig::new(command);
    if let Some(path) = &cli.config {
        apply(&mut config, &read_file(path)?)?;
    }
    apply(&mut config, &flags)?;
    config.command = command;
    Ok(config)
}

fn run(cli: Cli) -> Result<String, CliError> {
    let config = resolve(cli)?;
    write_effective_config(&config)?;
    config.validate()?;
    execute(&config)
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
    match run(cli) {
        Ok(summary) => {
            // A closed pipe (`| head`) is not a failure of the run.
            let _ = writeln!(std::io::stdout(), "{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
