//! The `solve` command-line tool.

pub mod commands;
pub mod config;
pub mod io;
pub mod report;
pub mod svg;
pub mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::error::Error;
pub use config::RunConfig;
pub use report::RunReport;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_RESULT: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("no result: {0}")]
    NoResult(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::NoResult(_) => EXIT_NO_RESULT,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::DimensionMismatch { .. }
            | Error::NonFiniteInput
            | Error::StepUnderflow(_)
            | Error::InvalidWeightMatrix(_)
            | Error::InvalidGenerator(_)
            | Error::InvalidConfig(_)
            | Error::InvalidParameters(_)
            | Error::InvalidTargets(_)
            | Error::InvalidTable(_)
            | Error::InvalidSpec(_)
            | Error::NonPositiveBandwidth(_) => CliError::Config(e.to_string()),
            _ => CliError::NoResult(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "solve", version, about = "Sample solution manifolds and run estimators on them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample points on the solution manifold by repeated gradient descent.
    Sample(RunArgs),
    /// Multi-start maximum likelihood constrained to the manifold.
    Mle(RunArgs),
    /// Weight a manifold sample by prior and likelihood; credible region and point estimates.
    Posterior(RunArgs),
    /// Recompute every number in a written report from the exported artifacts.
    Verify(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Keep launching chain batches until this many points are accepted.
    #[arg(long)]
    pub min_points: Option<usize>,
    /// Cap on the total number of chains across batches.
    #[arg(long)]
    pub max_attempts: Option<usize>,
}

/// A parsed config plus the directory relative paths resolve against.
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
    pub args: RunArgs,
}

impl Loaded {
    pub fn load(args: &RunArgs) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(&args.config)
            .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
        let mut config = RunConfig::from_json(&text)?;
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        config.validate()?;
        let base = args
            .config
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self {
            config,
            base,
            args: args.clone(),
        })
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn output(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_ref().map(|p| self.path(p))
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("SOLVE_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs the tool and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let args = match &cli.command {
        Command::Sample(a) | Command::Mle(a) | Command::Posterior(a) | Command::Verify(a) => a.clone(),
    };
    let result = Loaded::load(&args).and_then(|loaded| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(n) = args.threads {
            if n == 0 {
                return Err(CliError::Config("--threads must be at least 1".into()));
            }
            pool = pool.num_threads(n);
        }
        let pool = pool.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
        pool.install(|| match cli.command {
            Command::Sample(_) => commands::cmd_sample(&loaded),
            Command::Mle(_) => commands::cmd_mle(&loaded),
            Command::Posterior(_) => commands::cmd_posterior(&loaded),
            Command::Verify(_) => verify::cmd_verify(&loaded),
        })
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            eprintln!("solve: {e}");
            e.exit_code()
        }
    }
}
