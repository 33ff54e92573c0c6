//! Replicated simulation runs of the full selection pipeline.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{back_scaled_signals, frobenius_loss, onestep_baseline, replication_seed, Generator, GroundTruth};
use crate::bcv::{select_structure, BcvOptions};
use crate::error::Result;
use crate::fit::{fit_with_structure, FitOptions};
use crate::pmf::{extract_candidates, make_grid, CandidateOptions, DEFAULT_GRID_LENGTH, DEFAULT_GRID_MIN};
use crate::preprocess::{center_and_scale, MultiViewData};
use crate::structure::{Pattern, PatternSet, StructureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: Generator,
    pub replications: usize,
    /// Master seed; replication seeds are derived from it.
    pub seed: u64,
    pub k_r: usize,
    pub k_c: usize,
    pub grid_length: usize,
    pub grid_min: f64,
    pub eps_pmf: f64,
    pub eps_fit: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub gram_corrected: bool,
}

impl ExperimentConfig {
    pub fn new(generator: Generator, replications: usize, seed: u64) -> Self {
        ExperimentConfig {
            generator,
            replications,
            seed,
            k_r: 3,
            k_c: 3,
            grid_length: DEFAULT_GRID_LENGTH,
            grid_min: DEFAULT_GRID_MIN,
            eps_pmf: crate::pmf::DEFAULT_EPS,
            eps_fit: crate::pmf::DEFAULT_EPS,
            max_iter: crate::pmf::DEFAULT_MAX_ITER,
            restarts: 1,
            gram_corrected: false,
        }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions { eps: self.eps_fit, max_iter: self.max_iter, u0: None }
    }
}

/// Outcome of one replication; `error` is set and the rest left empty when it failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub selected: Option<String>,
    /// Selected multiplicity per pattern, keyed by the pattern's bit string.
    pub rank_by_pattern: BTreeMap<String, usize>,
    pub total_rank: Option<usize>,
    pub view_ranks: Vec<usize>,
    pub matches_truth: bool,
    pub candidates: usize,
    pub loss_slide: Option<f64>,
    pub loss_slide_best: Option<f64>,
    pub loss_onestep: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl LossSummary {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let count = v.len();
        let median = if count % 2 == 1 { v[count / 2] } else { 0.5 * (v[count / 2 - 1] + v[count / 2]) };
        Some(LossSummary { count, mean: v.iter().sum::<f64>() / count as f64, median, min: v[0], max: v[count - 1] })
    }
}

/// Frequency tables over the successful replications.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub successes: usize,
    pub failures: usize,
    pub truth_selected: usize,
    /// Selected structure (`describe` form) → count.
    pub selection_frequency: BTreeMap<String, usize>,
    /// Pattern → selected multiplicity → count; every pattern is listed.
    pub pattern_rank_counts: BTreeMap<String, BTreeMap<usize, usize>>,
    pub total_rank_counts: BTreeMap<usize, usize>,
    /// Per view: number of components touching it → count.
    pub view_rank_counts: Vec<BTreeMap<usize, usize>>,
    /// `slide`, `slide_best`, `onestep` → summary of the loss.
    pub losses: BTreeMap<String, LossSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub truth: String,
    pub records: Vec<ReplicationRecord>,
    pub summary: ExperimentSummary,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    replication: usize,
    seed: u64,
    selected: &'a str,
    total_rank: Option<usize>,
    view_ranks: String,
    matches_truth: bool,
    candidates: usize,
    loss_slide: Option<f64>,
    loss_slide_best: Option<f64>,
    loss_onestep: Option<f64>,
    error: &'a str,
}

impl ExperimentResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per replication.
    pub fn to_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            wtr.serialize(CsvRow {
                replication: r.replication,
                seed: r.seed,
                selected: r.selected.as_deref().unwrap_or(""),
                total_rank: r.total_rank,
                view_ranks: r.view_ranks.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
                matches_truth: r.matches_truth,
                candidates: r.candidates,
                loss_slide: r.loss_slide,
                loss_slide_best: r.loss_slide_best,
                loss_onestep: r.loss_onestep,
                error: r.error.as_deref().unwrap_or(""),
            })?;
        }
        let bytes = wtr.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

fn signal_loss(model_u: &ndarray::Array2<f64>, model_v: &ndarray::Array2<f64>, data: &MultiViewData, truth: &GroundTruth) -> Result<f64> {
    let est = back_scaled_signals(model_u.view(), model_v.view(), &data.p(), data.frobenius_scales());
    frobenius_loss(&truth.signals, &est)
}

struct Outcome {
    selected: StructureMatrix,
    candidates: usize,
    loss_slide: f64,
    loss_slide_best: f64,
    loss_onestep: f64,
}

fn replicate(config: &ExperimentConfig, seed: u64) -> Result<Outcome> {
    let (raw, truth) = config.generator.generate(seed)?;
    let data = center_and_scale(&raw)?;
    let grid = make_grid(&data, config.grid_length, config.grid_min)?;
    let candidates = extract_candidates(
        &data,
        &grid,
        &CandidateOptions { eps: config.eps_pmf, max_iter: config.max_iter, restarts: config.restarts, seed },
    )?;
    let bcv = BcvOptions {
        k_r: config.k_r,
        k_c: config.k_c,
        seed,
        eps: config.eps_fit,
        max_iter: config.max_iter,
        gram_corrected: config.gram_corrected,
    };
    let report = select_structure(&raw, &candidates, &bcv)?;
    let selected = report.selected_structure();
    let model = fit_with_structure(&data, &selected, &config.fit_options())?;
    let loss_slide = signal_loss(&model.u, &model.v, &data, &truth)?;

    let others: Vec<f64> = candidates
        .structures
        .par_iter()
        .enumerate()
        .filter(|&(c, _)| c != report.selected)
        .filter_map(|(_, s)| {
            let m = fit_with_structure(&data, s, &config.fit_options()).ok()?;
            signal_loss(&m.u, &m.v, &data, &truth).ok()
        })
        .collect();
    let loss_slide_best = others.into_iter().fold(loss_slide, f64::min);

    let d = data.d();
    let shared = truth.structure.rank_by_pattern().get(&Pattern::all(d)).copied().unwrap_or(0);
    let individual: Vec<usize> = (0..d).map(|i| truth.structure.view_rank(i) - shared).collect();
    let onestep = onestep_baseline(&data, shared, &individual)?;
    let onestep: Vec<_> = onestep.iter().enumerate().map(|(i, z)| data.unscale(i, z.view(), false)).collect();
    let loss_onestep = frobenius_loss(&truth.signals, &onestep)?;

    Ok(Outcome { selected, candidates: candidates.len(), loss_slide, loss_slide_best, loss_onestep })
}

fn pattern_key(p: &Pattern) -> String {
    p.to_string()
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let truth = config.generator.truth_structure();
    let d = truth.d();
    let records: Vec<ReplicationRecord> = (0..config.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(config.seed, rep);
            let mut record = ReplicationRecord {
                replication: rep,
                seed,
                selected: None,
                rank_by_pattern: BTreeMap::new(),
                total_rank: None,
                view_ranks: Vec::new(),
                matches_truth: false,
                candidates: 0,
                loss_slide: None,
                loss_slide_best: None,
                loss_onestep: None,
                error: None,
            };
            match replicate(config, seed) {
                Ok(o) => {
                    record.rank_by_pattern =
                        o.selected.rank_by_pattern().iter().map(|(p, &k)| (pattern_key(p), k)).collect();
                    record.total_rank = Some(o.selected.r());
                    record.view_ranks = (0..d).map(|i| o.selected.view_rank(i)).collect();
                    record.matches_truth = o.selected == truth;
                    record.selected = Some(o.selected.encode());
                    record.candidates = o.candidates;
                    record.loss_slide = Some(o.loss_slide);
                    record.loss_slide_best = Some(o.loss_slide_best);
                    record.loss_onestep = Some(o.loss_onestep);
                }
                Err(e) => {
                    log::warn!("replication {rep} failed: {e}");
                    record.error = Some(e.to_string());
                }
            }
            record
        })
        .collect();
    let summary = summarize(&records, d)?;
    Ok(ExperimentResult { config: config.clone(), truth: truth.describe(), records, summary })
}

fn summarize(records: &[ReplicationRecord], d: usize) -> Result<ExperimentSummary> {
    let mut summary = ExperimentSummary { view_rank_counts: vec![BTreeMap::new(); d], ..Default::default() };
    let patterns = PatternSet::new(d)?;
    for p in patterns.patterns() {
        summary.pattern_rank_counts.insert(pattern_key(p), BTreeMap::new());
    }
    for r in records {
        let Some(selected) = &r.selected else {
            summary.failures += 1;
            continue;
        };
        summary.successes += 1;
        summary.truth_selected += usize::from(r.matches_truth);
        let s = StructureMatrix::parse(selected, d)?;
        *summary.selection_frequency.entry(s.describe()).or_default() += 1;
        for p in patterns.patterns() {
            let k = r.rank_by_pattern.get(&pattern_key(p)).copied().unwrap_or(0);
            *summary.pattern_rank_counts.get_mut(&pattern_key(p)).expect("listed").entry(k).or_default() += 1;
        }
        *summary.total_rank_counts.entry(s.r()).or_default() += 1;
        for (i, &k) in r.view_ranks.iter().enumerate() {
            *summary.view_rank_counts[i].entry(k).or_default() += 1;
        }
    }
    let losses: [(&str, fn(&ReplicationRecord) -> Option<f64>); 3] = [
        ("slide", |r| r.loss_slide),
        ("slide_best", |r| r.loss_slide_best),
        ("onestep", |r| r.loss_onestep),
    ];
    for (name, get) in losses {
        if let Some(ls) = LossSummary::of(records.iter().filter_map(get)) {
            summary.losses.insert(name.to_string(), ls);
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::SecondSignal;

    fn quick(generator: Generator, reps: usize, seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(generator, reps, seed);
        c.grid_length = 8;
        c
    }

    #[test]
    fn single_replication_is_reproducible() {
        let config = quick(Generator::Case2 { second: SecondSignal::Correlated }, 1, 9);
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 1);
        let r = &a.records[0];
        assert!(r.error.is_none(), "{:?}", r.error);
        assert!(r.loss_slide_best.unwrap() <= r.loss_slide.unwrap());
        assert!(r.loss_onestep.unwrap() >= 0.0);
        assert_eq!(a.to_csv().unwrap().lines().count(), 2);
        assert_eq!(a.summary.successes, 1);
        assert_eq!(a.summary.pattern_rank_counts.len(), 3);
    }

    #[test]
    fn loss_summary_statistics() {
        let s = LossSummary::of([3.0, 1.0, 2.0, 10.0].into_iter()).unwrap();
        assert_eq!((s.count, s.median, s.min, s.max), (4, 2.5, 1.0, 10.0));
        assert_eq!(s.mean, 4.0);
        assert!(LossSummary::of(std::iter::empty()).is_none());
    }
}
