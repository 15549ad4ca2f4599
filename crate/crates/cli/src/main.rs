use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::json;
use vitl_cli::commands;
use vitl_cli::config::{Experiment, Flags, RunConfig, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "vitl", version, about = "Fit and sample emotion-conditioned landmark models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit on split 0 and write model.vitl and metrics.json.
    Fit(Flags),
    /// Cross-validate over a hyperparameter grid.
    Cv(Flags),
    /// Test error as a function of rank(A).
    RankSweep(Flags),
    /// Test error as a function of the observed fraction.
    MaskSweep(Flags),
    /// Predict landmarks along an emotion path.
    Generate(Flags),
    /// Predict landmarks for each row of a query file.
    Predict(Flags),
    /// Run the experiment named in the config file.
    Run(Flags),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": "usage", "code": 2, "message": msg.trim() }));
            return ExitCode::from(2);
        }
    };
    let (selected, flags) = match cli.command {
        Command::Fit(f) => (Some(Experiment::Fit), f),
        Command::Cv(f) => (Some(Experiment::Cv), f),
        Command::RankSweep(f) => (Some(Experiment::RankSweep), f),
        Command::MaskSweep(f) => (Some(Experiment::MaskSweep), f),
        Command::Generate(f) => (Some(Experiment::Generate), f),
        Command::Predict(f) => (Some(Experiment::Predict), f),
        Command::Run(f) => (None, f),
    };
    let env_out = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(Into::into);
    match RunConfig::resolve(selected, &flags, env_out).and_then(|cfg| commands::run(&cfg)) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", vitl_cli::error_line(&e));
            ExitCode::from(vitl_cli::exit_code(&e) as u8)
        }
    }
}
