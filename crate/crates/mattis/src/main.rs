use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mattis::error::exit;
use mattis::{CliError, Format, RunOptions};

/// Free energies, fixed points and rate functions of mean-field spin glasses
/// with a Mattis interaction.
#[derive(Debug, Parser)]
#[command(name = "mattis", version)]
struct Cli {
    /// rs-solve, path-solve, free-energy, rate-function, hj-grid,
    /// oracle-compare or rbm. Optional when the config names it.
    command: Option<String>,
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "mattis-out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Do not print the summary.
    #[arg(long)]
    quiet: bool,
    /// Leave the timestamp out of the provenance header.
    #[arg(long)]
    no_timestamp: bool,
    /// Print failures as JSON on stderr.
    #[arg(long)]
    error_json: bool,
}

fn fail(err: &CliError, json: bool) -> ExitCode {
    if json {
        eprintln!("{}", err.to_json());
    } else {
        eprintln!("error: {err}");
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        config: cli.config,
        command: cli.command,
        out: cli.out,
        seed: cli.seed,
        threads: cli.threads.map(usize::from),
        format: cli.format,
        timestamp: !cli.no_timestamp,
    };
    match mattis::run(&opts) {
        Ok(outcome) => {
            if !cli.quiet {
                print!("{}", outcome.report.summary_text());
            }
            if outcome.report.passed == Some(false) {
                let err = CliError::Acceptance(format!("{} checks", outcome.report.command));
                return fail(&err, cli.error_json);
            }
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => fail(&e, cli.error_json),
    }
}
