//! Command-line front end. `run` executes one command and returns the
//! artifacts it produced; `main` only parses arguments and maps exit codes.

pub mod args;
mod commands;
pub mod error;
mod inputs;

pub use args::{Cli, Command, Format, RunConfig, VerifyArgs};
pub use error::CliError;

use serde_json::Value;
use std::fs;
use std::io::Write;

/// One output file, available in both formats.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: &'static str,
    pub csv: String,
    pub json: Value,
    /// Printed to stdout when no output directory is given.
    pub primary: bool,
}

impl Artifact {
    fn primary(name: &'static str, csv: String, json: Value) -> Self {
        Self {
            name,
            csv,
            json,
            primary: true,
        }
    }

    fn secondary(name: &'static str, csv: String, json: Value) -> Self {
        Self {
            name,
            csv,
            json,
            primary: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Human-readable lines for stderr.
    pub notes: Vec<String>,
    pub exit_code: u8,
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = &cli.config;
    match cli.command {
        Command::Validate => commands::validate(cfg),
        Command::Dispatch => commands::dispatch(cfg),
        Command::Lme => commands::lme(cfg),
        Command::Accounts => commands::accounts(cfg),
        Command::Scenario => commands::scenario(cfg),
        Command::Storage => commands::storage(cfg),
        Command::Verify(v) => commands::verify(cfg, &v),
    }
}

/// Write artifacts to the output directory, or the primary ones to `stdout`.
pub fn emit(cfg: &RunConfig, outcome: &Outcome, stdout: &mut impl Write) -> Result<(), CliError> {
    let io = |path: String| move |source| CliError::Io { path, source };
    match &cfg.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io(dir.display().to_string()))?;
            for a in &outcome.artifacts {
                let (ext, body) = match cfg.format {
                    Format::Csv => ("csv", a.csv.clone()),
                    Format::Json => ("json", pretty(&a.json)),
                };
                let path = dir.join(format!("{}.{ext}", a.name));
                fs::write(&path, body).map_err(io(path.display().to_string()))?;
            }
        }
        None => {
            let body = match cfg.format {
                Format::Csv => outcome
                    .artifacts
                    .iter()
                    .filter(|a| a.primary)
                    .map(|a| a.csv.as_str())
                    .collect::<Vec<_>>()
                    .join("\n"),
                Format::Json => {
                    let map: serde_json::Map<String, Value> = outcome
                        .artifacts
                        .iter()
                        .filter(|a| a.primary)
                        .map(|a| (a.name.to_string(), a.json.clone()))
                        .collect();
                    pretty(&Value::Object(map))
                }
            };
            stdout.write_all(body.as_bytes()).map_err(io("stdout".into()))?;
        }
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}
