//! The `idgap` command-line tool.
//!
//! Exit codes: 0 on success, 1 on data or I/O errors, 2 on usage errors.
//! A failed run never leaves a partial output bundle.

pub mod args;
pub mod bundle;
pub mod config;
pub mod pipeline;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;
use sha2::{Digest, Sha256};

use args::{Cli, Command};
use config::AuditConfig;
use report::Analysis;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 1,
        }
    }
}

/// SHA-256 hex digest of the compact JSON encoding.
pub fn digest_value(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if workers == Some(0) {
        return Err(CliError::Usage("workers must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers.unwrap_or(0)).build().map_err(|e| CliError::Data(e.into()))
}

/// Run a parsed command; returns the published files.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let pool = pool(cli.workers)?;
    let workers = pool.current_num_threads();
    let audit = |a: &args::AuditArgs, analysis: Analysis| -> Result<Vec<PathBuf>, CliError> {
        let mut cfg = match &cli.config {
            Some(p) => AuditConfig::load(p)?,
            None => AuditConfig::default(),
        };
        a.apply(&mut cfg);
        cfg.workers = cli.workers;
        pool.install(|| report::run_analysis(analysis, &cfg))
    };
    match &cli.command {
        Command::Census(a) => audit(a, Analysis::Census),
        Command::Dangling(a) => audit(a, Analysis::Dangling),
        Command::Temporal(a) => audit(a, Analysis::Temporal),
        Command::Users(a) => audit(a, Analysis::Users),
        Command::Communities(a) => audit(a, Analysis::Communities),
        Command::Full(a) => audit(a, Analysis::Full),
        Command::Synth(a) => pool.install(|| report::run_synth(a)),
        Command::Sweep(a) => pool.install(|| report::run_sweep(a, workers)),
    }
}

/// Parse `args`, run, print outcome, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("usage error: {m}"),
                CliError::Data(err) => eprintln!("error: {err:#}"),
            }
            e.exit_code()
        }
    }
}
