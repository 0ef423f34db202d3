//! File formats, configuration and parallel drivers around `mattis-core`,
//! plus the `mattis` batch front end.
//!
//! A run reads one config file, executes one command and writes its tables
//! to an output directory. See [`config`] for the file layout.

// Negated comparisons in validation deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod parallel;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub use config::{Command, RunConfig};
pub use error::{CliError, CliResult};
pub use output::{Format, Provenance, Report, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub config: PathBuf,
    /// Command named on the command line, checked against the config.
    pub command: Option<String>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub format: Format,
    pub timestamp: bool,
}

impl RunOptions {
    pub fn new(config: impl AsRef<Path>, out: impl AsRef<Path>) -> Self {
        RunOptions {
            config: config.as_ref().to_path_buf(),
            command: None,
            out: out.as_ref().to_path_buf(),
            seed: None,
            threads: None,
            format: Format::Csv,
            timestamp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub files: Vec<PathBuf>,
}

pub fn provenance(cfg: &RunConfig, seed_override: Option<u64>, timestamp: bool) -> Provenance {
    let seeds = if cfg.command.uses_seed() {
        vec![commands::effective_seed(cfg, seed_override)]
    } else {
        Vec::new()
    };
    Provenance {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: cfg.command.name().to_string(),
        config_hash: cfg.config_hash.clone(),
        seeds,
        quad_order: Some(
            cfg.command
                .quad_order()
                .unwrap_or(mattis_core::quadrature::DEFAULT_ORDER),
        ),
        timestamp: timestamp.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        }),
    }
}

/// Loads the config, runs the command on a pool of `threads` workers and
/// writes the outputs.
pub fn run(opts: &RunOptions) -> CliResult<Outcome> {
    let cfg = RunConfig::load(&opts.config, opts.command.as_deref())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    let report = pool.install(|| commands::execute(&cfg, opts.seed))?;
    let prov = provenance(&cfg, opts.seed, opts.timestamp);
    let files = output::write_report(&report, &prov, &opts.out, opts.format)?;
    Ok(Outcome { report, files })
}
