//! Command-line front end for `spde-lab`: configuration, experiment
//! orchestration and deterministic report artifacts.
//!
//! Exit codes: 0 success, 1 usage, 2 failed precondition, 3 failed invariant.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::CliError;

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "SPDE_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "spde-lab", version, about = "Stochastic heat equation experiments")]
pub struct Cli {
    /// TOML experiment configuration; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (falls back to SPDE_LAB_THREADS, then all cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate an ensemble of solution paths.
    Sample,
    /// Compare the covariance oracle with ensemble covariances.
    Covariance,
    /// Representers, probe checks and duality gaps.
    Rkhs,
    /// Conditional-covariance screening and Kunsch experiments.
    Markov,
    /// Riemann-sum convergence study.
    Riemann,
}

impl Cli {
    /// Effective configuration after flag overrides.
    pub fn resolve_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        Ok(config)
    }

    pub fn thread_count(&self) -> Result<Option<usize>, CliError> {
        let n = match (self.threads, std::env::var(THREADS_ENV)) {
            (Some(n), _) => n,
            (None, Ok(v)) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v} is not a thread count")))?,
            (None, Err(_)) => return Ok(None),
        };
        if n == 0 {
            return Err(CliError::Usage("thread count must be positive".into()));
        }
        Ok(Some(n))
    }
}

/// Runs one command on a resolved configuration.
pub fn execute(command: Command, config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Sample => commands::sample(config),
        Command::Covariance => commands::covariance(config),
        Command::Rkhs => commands::rkhs(config),
        Command::Markov => commands::markov(config),
        Command::Riemann => commands::riemann(config),
    }
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let config = cli.resolve_config()?;
    let work = || execute(cli.command, &config);
    match cli.thread_count()? {
        None => work(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(work),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(files) => {
            if !cli.quiet {
                for f in files.iter().filter(|f| f.extension().is_some_and(|e| e != "field")) {
                    println!("wrote {}", f.display());
                }
                let fields = files.iter().filter(|f| f.extension().is_some_and(|e| e == "field")).count();
                if fields > 0 {
                    println!("wrote {fields} field files");
                }
            }
            0
        }
        Err(e) => {
            eprintln!("spde-lab: {e}");
            e.exit_code()
        }
    }
}
