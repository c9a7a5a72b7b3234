//! `beirnet` command line: pipeline stages over a shared output directory.

pub mod config;
pub mod manifest;
mod stages;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::RunConfig;
pub use manifest::{Manifest, Stage};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("`{running}` needs the output of `{needed}`; run `beirnet {needed}` first")]
    MissingStage {
        running: &'static str,
        needed: &'static str,
    },
    #[error("stale pipeline: {detail}; rerun `beirnet {stage}` and the stages after it")]
    Stale { stage: &'static str, detail: String },
    #[error(transparent)]
    Core(#[from] beirnet::Error),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "beirnet", version, about = "Narrative features and Granger networks for BEIR direction")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides paths.out)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for all cores
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Root seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Restrict to these countries (comma separated or repeated)
    #[arg(long, global = true, value_delimiter = ',')]
    pub country: Vec<String>,
    /// Granger BH level
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Residual-PLS components
    #[arg(long, global = true)]
    pub components: Option<usize>,
    /// Walk-forward splits
    #[arg(long, global = true)]
    pub folds: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic GKG and market files
    Synth {
        /// Narrative signal strength in [0, 1]
        #[arg(long)]
        signal: Option<f64>,
    },
    /// Parse and filter GKG files
    Ingest,
    /// Daily per-country theme panels
    Aggregate,
    /// Align markets, ADF checks, differencing and labels
    Preprocess,
    /// Full-sample residual PLS components
    Features,
    /// Walk-forward comparison against market-only benchmarks
    Evaluate,
    /// Pairwise Granger network
    Granger,
    /// Result tables and summary
    Report,
}

impl Cli {
    /// Config file (or defaults) with command-line overrides applied.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.global.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let g = &self.global;
        if let Some(o) = &g.out {
            cfg.paths.out = Some(o.clone());
        }
        if let Some(j) = g.jobs {
            cfg.jobs = j;
        }
        if let Some(s) = g.seed {
            cfg.seed = s;
        }
        if !g.country.is_empty() {
            cfg.countries = g.country.iter().map(|c| c.trim().to_ascii_uppercase()).collect();
        }
        if let Some(a) = g.alpha {
            cfg.granger.alpha = a;
        }
        if let Some(c) = g.components {
            cfg.features.components = c;
        }
        if let Some(f) = g.folds {
            cfg.evaluate.folds = f;
        }
        if let Command::Synth { signal: Some(s) } = self.command {
            cfg.synth.signal = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.resolve_config()?;
    let mut ctx = stages::Context::new(cfg)?;
    match cli.command {
        Command::Synth { .. } => ctx.synth(),
        Command::Ingest => ctx.ingest(),
        Command::Aggregate => ctx.aggregate(),
        Command::Preprocess => ctx.preprocess(),
        Command::Features => ctx.features(),
        Command::Evaluate => ctx.evaluate(),
        Command::Granger => ctx.granger(),
        Command::Report => ctx.report(),
    }
}

/// Parse `args`, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
