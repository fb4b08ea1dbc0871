//! Scenario runner for the `contact-hj` library.
//!
//! A run reads a TOML config, executes one task and writes CSV tables, JSON
//! diagnostics and a `manifest.json` listing every artifact together with the
//! fully resolved config. Exit codes: `0` success, `1` invariant failure,
//! `2` usage or config error, `3` numerical failure.

pub mod config;
mod error;
pub mod manifest;
pub mod tasks;

pub use config::{ScenarioConfig, TaskKind};
pub use error::CliError;
pub use manifest::{Artifacts, Manifest};

/// Runtime options that are not part of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub tol_overrides: Vec<String>,
    pub threads: usize,
}

/// Runs `task`, writes its artifacts and the manifest.
///
/// Config and usage errors return `Err` before anything is written; task
/// failures are reported through the manifest's exit status.
pub fn run_scenario(config: &ScenarioConfig, task: TaskKind, opts: &RunOptions) -> Result<Manifest, CliError> {
    config.validate(task)?;
    let spec = config.build_problem()?;
    let resolved = config.resolved();
    let mut art = Artifacts::create(&config.output.dir)?;
    let (validation, result) = match spec.validation_report(config.output.validation_samples, config.output.seed) {
        Ok(v) => (serde_json::to_value(v)?, tasks::run(task, config, &spec, &mut art)),
        Err(e) => (serde_json::Value::Null, Err(e.into())),
    };
    let (summary, exit) = match result {
        Ok(out) => (
            out.summary,
            match out.invariant_failure {
                None => manifest::ExitStatus {
                    code: 0,
                    status: "success".into(),
                    message: None,
                },
                Some(m) => manifest::ExitStatus {
                    code: 1,
                    status: "invariant_failure".into(),
                    message: Some(m),
                },
            },
        ),
        Err(e) => (
            serde_json::Value::Null,
            manifest::ExitStatus {
                code: e.exit_code(),
                status: e.status().into(),
                message: Some(e.to_string()),
            },
        ),
    };
    let m = Manifest {
        tool: format!("contact-hj {}", env!("CARGO_PKG_VERSION")),
        task: task.as_str().into(),
        config: resolved,
        tol_overrides: opts.tol_overrides.clone(),
        threads: opts.threads,
        files: art.files,
        validation,
        summary,
        exit,
    };
    m.write(&config.output.dir)?;
    Ok(m)
}
