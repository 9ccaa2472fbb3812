use clap::Parser;
use lme_cli::{emit, run, Cli};
use std::process::ExitCode;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    if let Err(e) = emit(&cli.config, &outcome, &mut std::io::stdout().lock()) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code());
    }
    for note in &outcome.notes {
        eprintln!("{note}");
    }
    ExitCode::from(outcome.exit_code)
}
