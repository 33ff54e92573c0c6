//! Run configuration: defaults, an optional `key = value` file, then flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use slide_core::pmf::{DEFAULT_EPS, DEFAULT_GRID_LENGTH, DEFAULT_GRID_MIN, DEFAULT_MAX_ITER};

use crate::UsageError;

/// Options shared by every command. `None` means "not given on the command line".
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SolverArgs {
    /// Number of penalty values on the regularisation path
    #[arg(long)]
    pub grid_length: Option<usize>,
    /// Smallest penalty on the path
    #[arg(long)]
    pub grid_min: Option<f64>,
    /// Row folds for bi-cross-validation
    #[arg(long = "kr")]
    pub k_r: Option<usize>,
    /// Column folds per view for bi-cross-validation
    #[arg(long = "kc")]
    pub k_c: Option<usize>,
    /// Stopping threshold on the decrease of the penalised objective
    #[arg(long)]
    pub eps_pmf: Option<f64>,
    /// Stopping threshold on the change of the fitted signal
    #[arg(long)]
    pub eps_fit: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Starts per penalty value (the first is always the SVD start)
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, env = "SLIDE_SEED")]
    pub seed: Option<u64>,
    /// Insert the score Gram inverse in the holdout predictor
    #[arg(long)]
    pub gram_corrected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub views: Vec<PathBuf>,
    /// Not echoed in the manifest so that reruns into another directory match.
    #[serde(skip)]
    pub out: PathBuf,
    pub grid_length: usize,
    pub grid_min: f64,
    pub k_r: usize,
    pub k_c: usize,
    pub eps_pmf: f64,
    pub eps_fit: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    pub structure: Option<String>,
    pub gram_corrected: bool,
    pub generator: Option<String>,
    pub replications: Option<usize>,
}

impl RunConfig {
    pub fn new(command: &str, out: PathBuf) -> Self {
        RunConfig {
            command: command.to_string(),
            views: Vec::new(),
            out,
            grid_length: DEFAULT_GRID_LENGTH,
            grid_min: DEFAULT_GRID_MIN,
            k_r: 3,
            k_c: 3,
            eps_pmf: DEFAULT_EPS,
            eps_fit: DEFAULT_EPS,
            max_iter: DEFAULT_MAX_ITER,
            restarts: 1,
            seed: 0,
            structure: None,
            gram_corrected: false,
            generator: None,
            replications: None,
        }
    }

    /// Overlay values from a parsed config file.
    pub fn apply_file(&mut self, entries: &BTreeMap<String, Vec<String>>) -> Result<(), UsageError> {
        for (key, values) in entries {
            let last = values.last().expect("entries are never empty").as_str();
            match key.as_str() {
                "views" => {
                    self.views = values
                        .iter()
                        .flat_map(|v| v.split(','))
                        .map(str::trim)
                        .filter(|v| !v.is_empty())
                        .map(PathBuf::from)
                        .collect();
                }
                "out" => self.out = PathBuf::from(last),
                "grid-length" => self.grid_length = parse_value(key, last)?,
                "grid-min" => self.grid_min = parse_value(key, last)?,
                "kr" => self.k_r = parse_value(key, last)?,
                "kc" => self.k_c = parse_value(key, last)?,
                "eps-pmf" => self.eps_pmf = parse_value(key, last)?,
                "eps-fit" => self.eps_fit = parse_value(key, last)?,
                "max-iter" => self.max_iter = parse_value(key, last)?,
                "restarts" => self.restarts = parse_value(key, last)?,
                "seed" => self.seed = parse_value(key, last)?,
                "structure" => self.structure = Some(last.to_string()),
                "gram-corrected" => self.gram_corrected = parse_value(key, last)?,
                "generator" => self.generator = Some(last.to_string()),
                "replications" => self.replications = Some(parse_value(key, last)?),
                "threads" => {}
                other => return Err(UsageError(format!("unknown config key `{other}`"))),
            }
        }
        Ok(())
    }

    /// Overlay values given on the command line.
    pub fn apply_args(&mut self, args: &SolverArgs) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = args.$field { self.$field = v; })*
            };
        }
        take!(grid_length, grid_min, k_r, k_c, eps_pmf, eps_fit, max_iter, restarts, seed);
        self.gram_corrected |= args.gram_corrected;
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        let positive_f = [("grid-min", self.grid_min), ("eps-pmf", self.eps_pmf), ("eps-fit", self.eps_fit)];
        for (name, v) in positive_f {
            if !(v > 0.0 && v.is_finite()) {
                return Err(UsageError(format!("--{name} must be a positive number, got {v}")));
            }
        }
        let positive_u = [("grid-length", self.grid_length), ("max-iter", self.max_iter), ("restarts", self.restarts)];
        for (name, v) in positive_u {
            if v == 0 {
                return Err(UsageError(format!("--{name} must be at least 1")));
            }
        }
        if self.k_r < 2 || self.k_c < 2 {
            return Err(UsageError(format!("--kr and --kc must be at least 2, got {} and {}", self.k_r, self.k_c)));
        }
        for path in &self.views {
            if !path.is_file() {
                return Err(UsageError(format!("view file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UsageError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| UsageError(format!("config key `{key}`: cannot parse `{value}`: {e}")))
}

/// Parse a flat `key = value` file. `#` starts a comment; repeated keys
/// accumulate (used for `views`).
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, Vec<String>>, UsageError> {
    let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        entries.entry(key).or_default().push(value.trim().to_string());
    }
    Ok(entries)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, Vec<String>>, UsageError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}
