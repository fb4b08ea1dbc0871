use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use contact_hj_cli::{run_scenario, CliError, RunOptions, ScenarioConfig, TaskKind};

#[derive(Debug, Parser)]
#[command(name = "contact-hj", version, about = "Characteristic-method scenarios for contact Hamilton-Jacobi equations")]
struct Cli {
    #[command(subcommand)]
    task: Task,
    /// Scenario config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed; overrides `output.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Tolerance override `KEY=VAL`, repeatable.
    #[arg(long = "tol-override", global = true, value_name = "KEY=VAL")]
    tol_override: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Task {
    /// Value function on a time × space grid.
    Value,
    /// Regular / irregular / conjugate classification on a grid.
    Classify,
    /// Characteristics and their variational system from seeds.
    TraceChar,
    /// First conjugate time along characteristics.
    ConjugateScan,
    /// Strict singular characteristic from a point.
    TraceSingular,
    /// Lax-Friedrichs grid solution and kink detection.
    Oracle,
    /// Traced singular curve against grid kinks.
    Report,
}

impl Task {
    fn kind(&self) -> TaskKind {
        match self {
            Task::Value => TaskKind::Value,
            Task::Classify => TaskKind::Classify,
            Task::TraceChar => TaskKind::TraceChar,
            Task::ConjugateScan => TaskKind::ConjugateScan,
            Task::TraceSingular => TaskKind::TraceSingular,
            Task::Oracle => TaskKind::Oracle,
            Task::Report => TaskKind::Report,
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.output.seed = seed;
    }
    for o in &cli.tol_override {
        cfg.override_tolerance(o)?;
    }
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    let opts = RunOptions {
        tol_overrides: cli.tol_override.clone(),
        threads: cli.threads,
    };
    let m = run_scenario(&cfg, cli.task.kind(), &opts)?;
    println!(
        "[{}] {} ({} files in {})",
        m.task,
        m.exit.status,
        m.files.len(),
        cfg.output.dir.display()
    );
    if let Some(msg) = &m.exit.message {
        eprintln!("{msg}");
    }
    Ok(m.exit.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = execute(&cli).unwrap_or_else(|e| {
        eprintln!("{e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
