//! Command-line front end: decompose matched CSV views, fit a fixed
//! structure, run simulation studies, and count structures.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_count, cmd_decompose, cmd_fit, cmd_simulate};
pub use config::{RunConfig, SolverArgs};

/// Invalid invocation; maps to exit status 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug)]
pub enum CliError {
    Usage(UsageError),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(e) => write!(f, "usage error: {e}"),
            CliError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<UsageError> for CliError {
    fn from(e: UsageError) -> Self {
        CliError::Usage(e)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "slide", version, about = "Shared, partially shared and individual structure in matched data views")]
pub struct Cli {
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Flat `key = value` file; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select a structure by cross-validation and fit it
    Decompose {
        /// One CSV file per view (repeat the flag)
        #[arg(long = "views")]
        views: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip selection and fit this structure, e.g. "11,10,01"
        #[arg(long)]
        structure: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Fit a given structure
    Fit {
        #[arg(long = "views")]
        views: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        structure: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Run replicated simulations of a planted design
    Simulate {
        /// case1-s1, case1-s2, case1-s3, case2, case2-same-score or threeview
        #[arg(long)]
        generator: Option<String>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Number of distinct structures with `r` components over `d` views
    CountStructures { d: usize, r: usize },
}

/// Merge defaults, the optional config file, and flags.
pub fn resolve(cli: &Cli) -> Result<RunConfig, UsageError> {
    let (name, views, out, structure, solver, generator, replications) = match &cli.command {
        Command::Decompose { views, out, structure, solver } => ("decompose", views, out, structure, solver, None, None),
        Command::Fit { views, out, structure, solver } => ("fit", views, out, structure, solver, None, None),
        Command::Simulate { generator, replications, out, solver } => {
            ("simulate", &Vec::new(), out, &None, solver, generator.clone(), *replications)
        }
        Command::CountStructures { .. } => return Ok(RunConfig::new("count-structures", PathBuf::new())),
    };
    let mut cfg = RunConfig::new(name, PathBuf::from("slide-out"));
    if let Some(path) = &cli.config {
        cfg.apply_file(&config::read_config_file(path)?)?;
    }
    cfg.apply_args(solver);
    if !views.is_empty() {
        cfg.views = views.clone();
    }
    if let Some(out) = out {
        cfg.out = out.clone();
    }
    if structure.is_some() {
        cfg.structure = structure.clone();
    }
    if generator.is_some() {
        cfg.generator = generator;
    }
    if replications.is_some() {
        cfg.replications = replications;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(e.into()))?;
    }
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Decompose { .. } => cmd_decompose(&cfg),
        Command::Fit { .. } => cmd_fit(&cfg),
        Command::Simulate { .. } => cmd_simulate(&cfg),
        Command::CountStructures { d, r } => {
            println!("{}", cmd_count(d, r)?);
            Ok(())
        }
    }
}
