use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use slide_core::bcv::{select_structure, BcvOptions, BcvReport};
use slide_core::fit::{variance_explained, ModelDocument};
use slide_core::pmf::{extract_candidates, make_grid, CandidateOptions};
use slide_core::simulate::{run_experiment, ExperimentConfig, ExperimentResult, Generator};
use slide_core::structure::count_structures;
use slide_core::{center_and_scale, fit_with_structure, FitOptions, MultiViewData, RawViews, SlideModel, StructureMatrix};
use slide_core::{CandidateSet, LambdaGrid, SlideError, VarianceReport};

use crate::{CliError, RunConfig, UsageError};

const DEFAULT_REPLICATIONS: usize = 100;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    status: &'static str,
    config: &'a RunConfig,
    outputs: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct ModelOutput<'a> {
    #[serde(flatten)]
    document: ModelDocument,
    column_means: Vec<Vec<f64>>,
    frobenius_scales: &'a [f64],
    iterations: usize,
    converged: bool,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct CandidateEntry {
    structure: String,
    ranks: String,
    components: usize,
    lambdas: Vec<f64>,
}

#[derive(Serialize)]
struct CandidatesOutput<'a> {
    lambda_grid: &'a [f64],
    candidates: Vec<CandidateEntry>,
    warnings: &'a [String],
}

/// Files written so far, so a failed run can still list them.
struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs { dir, written: Vec::new() })
    }

    fn text(&mut self, name: &str, contents: &str) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    /// Always written last; records whether the run completed.
    fn finish(mut self, cfg: &RunConfig, result: Result<(), CliError>) -> Result<(), CliError> {
        let error = result.as_ref().err().map(ToString::to_string);
        let outputs = std::mem::take(&mut self.written);
        let manifest = Manifest {
            tool: "slide",
            version: env!("CARGO_PKG_VERSION"),
            status: if error.is_some() { "failed" } else { "ok" },
            config: cfg,
            outputs: &outputs,
            error,
        };
        self.json("manifest.json", &manifest)?;
        result
    }
}

fn load_views(cfg: &RunConfig) -> Result<(RawViews, MultiViewData), CliError> {
    if cfg.views.len() < 2 {
        return Err(UsageError(format!("need at least 2 --views files, got {}", cfg.views.len())).into());
    }
    let raw = RawViews::from_csv_files(&cfg.views).context("reading views")?;
    let data = center_and_scale(&raw).context("standardising views")?;
    Ok((raw, data))
}

fn parse_structure(text: &str, d: usize) -> Result<StructureMatrix, UsageError> {
    StructureMatrix::parse(text, d).map_err(|e| UsageError(format!("--structure: {e}")))
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions { eps: cfg.eps_fit, max_iter: cfg.max_iter, u0: None }
}

fn candidates_output<'a>(grid: &'a LambdaGrid, set: &'a CandidateSet) -> CandidatesOutput<'a> {
    CandidatesOutput {
        lambda_grid: grid.values(),
        candidates: set
            .structures
            .iter()
            .zip(&set.generating_lambda)
            .map(|(s, lambdas)| CandidateEntry {
                structure: s.encode(),
                ranks: s.describe(),
                components: s.r(),
                lambdas: lambdas.clone(),
            })
            .collect(),
        warnings: &set.warnings,
    }
}

fn model_output<'a>(model: &'a SlideModel, data: &'a MultiViewData) -> ModelOutput<'a> {
    ModelOutput {
        document: ModelDocument::from_model(model, data.names()),
        column_means: data.column_means().iter().map(|m| m.to_vec()).collect(),
        frobenius_scales: data.frobenius_scales(),
        iterations: model.iterations,
        converged: model.converged,
        warnings: &model.warnings,
    }
}

fn summary_text(data: &MultiViewData, model: &SlideModel, variance: &VarianceReport, bcv: Option<&BcvReport>) -> String {
    let mut s = String::new();
    let dims: Vec<String> = data
        .names()
        .iter()
        .zip(data.p())
        .map(|(name, p)| format!("{name} ({} x {p})", data.n()))
        .collect();
    writeln!(s, "views: {}", dims.join(", ")).unwrap();
    writeln!(s, "structure: {}", model.structure.describe()).unwrap();
    writeln!(s, "components: {}", model.r()).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "pattern  rank").unwrap();
    for (pattern, k) in model.structure.rank_by_pattern() {
        writeln!(s, "{:<8} {k}", pattern.to_string()).unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "view  rank  explained").unwrap();
    for v in &variance.views {
        writeln!(s, "{}  {}  {:.4}", v.name, v.rank, v.explained).unwrap();
    }
    writeln!(s, "total  {}  {:.4}", variance.total_rank, variance.explained).unwrap();
    if let Some(report) = bcv {
        writeln!(s).unwrap();
        writeln!(
            s,
            "selected candidate {} of {} (cross-validation error {:.6})",
            report.selected + 1,
            report.candidates.len(),
            report.total_errors[report.selected]
        )
        .unwrap();
    }
    for w in &model.warnings {
        writeln!(s, "warning: {w}").unwrap();
    }
    s
}

fn decompose_into(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let (raw, data) = load_views(cfg)?;
    let fixed = cfg.structure.as_deref().map(|t| parse_structure(t, data.d())).transpose()?;

    let (structure, report) = match fixed {
        Some(s) => (s, None),
        None => {
            let grid = make_grid(&data, cfg.grid_length, cfg.grid_min).context("building the penalty grid")?;
            let options = CandidateOptions { eps: cfg.eps_pmf, max_iter: cfg.max_iter, restarts: cfg.restarts, seed: cfg.seed };
            let set = extract_candidates(&data, &grid, &options).context("extracting candidate structures")?;
            out.json("candidates.json", &candidates_output(&grid, &set))?;
            let bcv = BcvOptions {
                k_r: cfg.k_r,
                k_c: cfg.k_c,
                seed: cfg.seed,
                eps: cfg.eps_fit,
                max_iter: cfg.max_iter,
                gram_corrected: cfg.gram_corrected,
            };
            let report = select_structure(&raw, &set, &bcv).map_err(|e| match e {
                SlideError::TooFewSamples { .. } | SlideError::TooFewColumns { .. } => {
                    CliError::Usage(UsageError(e.to_string()))
                }
                e => CliError::Runtime(anyhow::Error::new(e).context("selecting a structure")),
            })?;
            out.json("bcv_report.json", &report)?;
            (report.selected_structure(), Some(report))
        }
    };

    let model = fit_with_structure(&data, &structure, &fit_options(cfg)).context("fitting the selected structure")?;
    for w in &model.warnings {
        log::warn!("{w}");
    }
    out.json("model.json", &model_output(&model, &data))?;
    let variance = variance_explained(&model, &data);
    out.json("variance.json", &variance)?;
    out.text("summary.txt", &summary_text(&data, &model, &variance, report.as_ref()))?;
    Ok(())
}

/// Select a structure (unless one is given), fit it, and write the results.
pub fn cmd_decompose(cfg: &RunConfig) -> Result<(), CliError> {
    let mut out = Outputs::new(&cfg.out)?;
    let result = decompose_into(cfg, &mut out);
    out.finish(cfg, result)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.structure.is_none() {
        return Err(UsageError("fit needs --structure".into()).into());
    }
    cmd_decompose(cfg)
}

fn experiment_config(cfg: &RunConfig) -> Result<ExperimentConfig, UsageError> {
    let name = cfg.generator.as_deref().ok_or_else(|| UsageError("simulate needs --generator".into()))?;
    let generator: Generator = name.parse().map_err(|e: SlideError| UsageError(e.to_string()))?;
    let mut ec = ExperimentConfig::new(generator, cfg.replications.unwrap_or(DEFAULT_REPLICATIONS), cfg.seed);
    ec.k_r = cfg.k_r;
    ec.k_c = cfg.k_c;
    ec.grid_length = cfg.grid_length;
    ec.grid_min = cfg.grid_min;
    ec.eps_pmf = cfg.eps_pmf;
    ec.eps_fit = cfg.eps_fit;
    ec.max_iter = cfg.max_iter;
    ec.restarts = cfg.restarts;
    ec.gram_corrected = cfg.gram_corrected;
    Ok(ec)
}

fn experiment_summary(result: &ExperimentResult) -> String {
    let sum = &result.summary;
    let mut s = String::new();
    writeln!(s, "generator: {}", result.config.generator).unwrap();
    writeln!(s, "true structure: {}", result.truth).unwrap();
    writeln!(s, "replications: {} ({} failed)", result.records.len(), sum.failures).unwrap();
    writeln!(s, "true structure selected: {}", sum.truth_selected).unwrap();
    writeln!(s).unwrap();
    writeln!(s, "selected structure frequencies").unwrap();
    let mut freq: Vec<_> = sum.selection_frequency.iter().collect();
    freq.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    for (structure, count) in freq {
        writeln!(s, "  {count:>4}  {structure}").unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "rank counts per pattern").unwrap();
    for (pattern, counts) in &sum.pattern_rank_counts {
        let cells: Vec<String> = counts.iter().map(|(k, c)| format!("{k}:{c}")).collect();
        writeln!(s, "  {pattern}  {}", cells.join(" ")).unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "loss       mean      median").unwrap();
    for (name, l) in &sum.losses {
        writeln!(s, "  {name:<10} {:.5}  {:.5}", l.mean, l.median).unwrap();
    }
    s
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let ec = experiment_config(cfg)?;
    let mut out = Outputs::new(&cfg.out)?;
    let result = (|| -> Result<(), CliError> {
        let result = run_experiment(&ec).context("running the experiment")?;
        out.json("experiment.json", &result)?;
        out.text("replications.csv", &result.to_csv().context("formatting replications")?)?;
        out.text("summary.txt", &experiment_summary(&result))?;
        Ok(())
    })();
    out.finish(cfg, result)
}

/// Number of non-equivalent structures with at most `r` components over `d` views.
pub fn cmd_count(d: usize, r: usize) -> Result<String, CliError> {
    if d == 0 {
        return Err(UsageError("need at least one view".into()).into());
    }
    let count = count_structures(d, r).context("counting structures")?;
    Ok(count.to_string())
}
