use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tfrc_cli::output::{self, render};
use tfrc_cli::{commands, CliError, ConfigError, RunSpec};
use tfrc_core::ctmc::SolverChoice;

/// Analytic and simulated performance of TFRC call admission control in one cell.
#[derive(Parser)]
#[command(name = "tfrc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Markov model for each requested stair count.
    Solve,
    /// Run independent simulation replications and pool them into 95% intervals.
    Simulate,
    /// Analytic values per stair count next to the simulated intervals.
    Compare {
        /// Existing `solve` document; needs --simulated.
        #[arg(long, requires = "simulated")]
        analytic: Option<PathBuf>,
        /// Existing `simulate` document of the same cell; needs --analytic.
        #[arg(long, requires = "analytic")]
        simulated: Option<PathBuf>,
    },
    /// Solve once per value of one numeric model field.
    Sweep {
        /// Model field to vary.
        #[arg(long)]
        field: Option<String>,
        /// Comma-separated values; an empty list gives an empty table.
        #[arg(long, allow_hyphen_values = true)]
        values: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run specification.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// JSON result file (stdout when absent).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Long-form CSV table.
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Event trace of the first replication.
    #[arg(long, global = true, value_name = "PATH")]
    trace: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "N")]
    replications: Option<usize>,
    /// Simulated time per replication.
    #[arg(long, global = true, value_name = "T")]
    horizon: Option<f64>,
    /// Stair counts, e.g. 1,4,16.
    #[arg(long, global = true, value_name = "M[,M...]")]
    stairs: Option<String>,
    /// Power-iteration tolerance.
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,
    #[arg(long, global = true)]
    solver: Option<Solver>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Auto,
    Direct,
    Iterative,
}

fn parse_list<T: FromStr>(field: &str, raw: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|e| ConfigError::Invalid { field: field.into(), reason: format!("`{s}`: {e}") })
        })
        .collect()
}

fn apply_flags(spec: &mut RunSpec, cli: &Cli) -> Result<(), ConfigError> {
    let c = &cli.common;
    if let Some(v) = c.seed {
        spec.simulation.seed = v;
    }
    if let Some(v) = c.replications {
        spec.simulation.replications = v;
    }
    if let Some(v) = c.horizon {
        spec.simulation.horizon = v;
    }
    if let Some(v) = c.tol {
        spec.solver.tol = v;
    }
    if let Some(s) = c.solver {
        spec.solver.method = match s {
            Solver::Auto => SolverChoice::Auto,
            Solver::Direct => SolverChoice::Direct,
            Solver::Iterative => SolverChoice::Iterative,
        };
    }
    if let Some(raw) = &c.stairs {
        if matches!(cli.command, Command::Compare { .. }) {
            spec.compare.stairs = parse_list("compare.stairs", raw)?;
        } else {
            spec.solver.stairs = parse_list("solver.stairs", raw)?;
        }
    }
    if let Command::Sweep { field, values } = &cli.command {
        if let Some(f) = field {
            spec.sweep.field = f.clone();
        }
        if let Some(raw) = values {
            spec.sweep.values = parse_list("sweep.values", raw)?;
        }
    }
    for (slot, flag) in [(&mut spec.output.out, &c.out), (&mut spec.output.csv, &c.csv), (&mut spec.output.trace, &c.trace)] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut spec = RunSpec::load(cli.common.config.as_deref(), std::env::vars())?;
    apply_flags(&mut spec, cli)?;
    let (name, (results, table)) = match &cli.command {
        Command::Compare { analytic: Some(a), simulated: Some(s) } => {
            let (solved, simulated) = (output::read_document(a)?, output::read_document(s)?);
            let (results, table) = commands::compare_documents(&solved, &simulated)?;
            // the document describes the compared cell, not this invocation
            let output = spec.output.clone();
            spec = serde_json::from_value(simulated["config"].clone())
                .map_err(|e| CliError::Output(format!("{}: embedded config: {e}", s.display())))?;
            spec.output = output;
            ("compare", (results, table))
        }
        command => {
            let sched = spec.validate()?;
            match command {
                Command::Solve => ("solve", commands::solve(&spec)?),
                Command::Simulate => ("simulate", commands::simulate(&spec, &sched)?),
                Command::Compare { .. } => ("compare", commands::compare(&spec, &sched)?),
                Command::Sweep { .. } => {
                    spec.validate_sweep()?;
                    ("sweep", commands::sweep(&spec))
                }
            }
        }
    };
    let sched = spec.validate()?;
    let doc = output::document(name, &spec, &sched, results);
    output::write_json(spec.output.out.as_deref(), &doc)?;
    if let Some(path) = &spec.output.csv {
        table.write_csv(path)?;
    }
    if spec.output.out.is_some() {
        print!("{}", render(&table));
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = execute(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
