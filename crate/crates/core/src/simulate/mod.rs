//! Synthetic multi-view data with a known decomposition.
//!
//! Generators plant orthonormal scores and block-sparse loadings, add
//! Gaussian noise calibrated to unit signal-to-noise per view
//! (`‖Z_i‖²_F = σ_i² n p_i`), and return the raw views together with the
//! ground truth. [`frobenius_loss`] scores an estimate against the truth.

mod experiment;
mod oracle;

pub use experiment::{
    run_experiment, ExperimentConfig, ExperimentResult, ExperimentSummary, LossSummary, ReplicationRecord,
};
pub use oracle::{exact_decompose, onestep_baseline};

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlideError};
use crate::linalg;
use crate::preprocess::{block_offsets, RawViews};
use crate::structure::{Pattern, StructureMatrix};

/// Which product the second view's signal uses in the correlated-scores design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SecondSignal {
    /// `Z_2 = u_2 v_2ᵀ`: one shared and one individual component.
    Correlated,
    /// `Z_2 = u_1 v_2ᵀ`: a single shared component.
    SameScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    /// Shared + individual components; scenario 1, 2 or 3.
    Case1 { scenario: u8 },
    /// Two rank-one views with correlated scores.
    Case2 { second: SecondSignal },
    /// Three views with all seven patterns at rank 2.
    ThreeView,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Case1 { scenario } => write!(f, "case1-s{scenario}"),
            Generator::Case2 { second: SecondSignal::Correlated } => f.write_str("case2"),
            Generator::Case2 { second: SecondSignal::SameScore } => f.write_str("case2-same-score"),
            Generator::ThreeView => f.write_str("threeview"),
        }
    }
}

impl FromStr for Generator {
    type Err = SlideError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "case1-s1" => Ok(Generator::Case1 { scenario: 1 }),
            "case1-s2" => Ok(Generator::Case1 { scenario: 2 }),
            "case1-s3" => Ok(Generator::Case1 { scenario: 3 }),
            "case2" => Ok(Generator::Case2 { second: SecondSignal::Correlated }),
            "case2-same-score" => Ok(Generator::Case2 { second: SecondSignal::SameScore }),
            "threeview" => Ok(Generator::ThreeView),
            other => Err(SlideError::Parse(format!(
                "unknown generator `{other}` (expected case1-s1, case1-s2, case1-s3, case2, case2-same-score or threeview)"
            ))),
        }
    }
}

impl Generator {
    pub fn generate(&self, seed: u64) -> Result<(RawViews, GroundTruth)> {
        match *self {
            Generator::Case1 { scenario } => gen_case1(scenario, seed),
            Generator::Case2 { second } => gen_case2(seed, second),
            Generator::ThreeView => gen_threeview(seed),
        }
    }

    /// The planted structure, which does not depend on the seed.
    pub fn truth_structure(&self) -> StructureMatrix {
        let encoded = match self {
            Generator::Case1 { .. } => "11,11,10,10,01,01",
            Generator::Case2 { second: SecondSignal::Correlated } => "11,01",
            Generator::Case2 { second: SecondSignal::SameScore } => "11",
            Generator::ThreeView => "111,111,110,110,101,101,011,011,100,100,010,010,001,001",
        };
        StructureMatrix::parse_infer(encoded).expect("valid literal")
    }
}

/// The planted decomposition behind a simulated data set.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Noiseless signals `Z_i`.
    pub signals: Vec<Array2<f64>>,
    pub structure: StructureMatrix,
    /// Orthonormal, column-centred scores (`n × r`).
    pub scores: Array2<f64>,
    /// Orthonormal block-sparse loadings before scaling (`p × r`); `None`
    /// when the design does not have one.
    pub loadings: Option<Array2<f64>>,
    /// Block-sparse `V` with `[Z_1 … Z_d] = U Vᵀ`.
    pub v: Array2<f64>,
    pub noise_sigmas: Vec<f64>,
    pub seed: u64,
}

impl GroundTruth {
    pub fn p(&self) -> Vec<usize> {
        self.signals.iter().map(|z| z.ncols()).collect()
    }
}

/// `σ_i = ‖Z_i‖_F / √(n p_i)` for every view.
pub fn noise_sigma(signals: &[Array2<f64>]) -> Result<Vec<f64>> {
    signals
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let norm = linalg::frobenius_sq(z.view()).sqrt();
            if norm == 0.0 {
                return Err(SlideError::ZeroSignal(i));
            }
            Ok(norm / (z.len() as f64).sqrt())
        })
        .collect()
}

/// `Σ_i ‖Z_i − Ẑ_i‖²_F / ‖Z_i‖²_F`.
pub fn frobenius_loss(truth: &[Array2<f64>], estimate: &[Array2<f64>]) -> Result<f64> {
    if truth.len() != estimate.len() {
        return Err(SlideError::DimensionMismatch(format!(
            "{} true views, {} estimates",
            truth.len(),
            estimate.len()
        )));
    }
    let mut loss = 0.0;
    for (i, (z, zh)) in truth.iter().zip(estimate).enumerate() {
        if z.dim() != zh.dim() {
            return Err(SlideError::DimensionMismatch(format!(
                "view {}: truth {:?}, estimate {:?}",
                i + 1,
                z.dim(),
                zh.dim()
            )));
        }
        let denom = linalg::frobenius_sq(z.view());
        if denom == 0.0 {
            return Err(SlideError::ZeroSignal(i));
        }
        loss += linalg::frobenius_sq((z - zh).view()) / denom;
    }
    Ok(loss)
}

/// Seed of replication `rep`: the first word of the master seed's stream `rep`.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
}

/// Uniform entries, column-centred, then orthonormalised.
fn centred_scores(rng: &mut ChaCha8Rng, n: usize, r: usize) -> Result<Array2<f64>> {
    let raw = uniform_matrix(rng, n, r);
    let (centred, _) = linalg::column_center(raw.view());
    linalg::orthonormalize(centred.view())
}

/// Uniform block-sparse loadings with `WᵀW = I`.
///
/// Each view's nonzero columns are orthonormalised together, then every
/// column is divided by `√|pattern|`. Columns are orthogonal within each view
/// and the zero blocks survive, which a single QR of the whole layout would
/// not preserve.
fn block_loadings(rng: &mut ChaCha8Rng, p: &[usize], columns: &[Pattern]) -> Result<Array2<f64>> {
    let offsets = block_offsets(p);
    let mut w = Array2::zeros((p.iter().sum(), columns.len()));
    for (i, (&off, &pi)) in offsets.iter().zip(p).enumerate() {
        let cols: Vec<usize> = (0..columns.len()).filter(|&j| columns[j].contains(i)).collect();
        if cols.len() > pi {
            return Err(SlideError::InfeasibleRank { r: cols.len(), max: pi });
        }
        let q = linalg::orthonormalize(uniform_matrix(rng, pi, cols.len()).view())?;
        for (c, &j) in cols.iter().enumerate() {
            w.slice_mut(s![off..off + pi, j]).assign(&q.column(c));
        }
    }
    for (j, pattern) in columns.iter().enumerate() {
        let k = pattern.count_views() as f64;
        w.column_mut(j).mapv_inplace(|x| x / k.sqrt());
    }
    Ok(w)
}

fn split_signal(u: &Array2<f64>, v: &Array2<f64>, p: &[usize]) -> Vec<Array2<f64>> {
    block_offsets(p)
        .iter()
        .zip(p)
        .map(|(&off, &pi)| u.dot(&v.slice(s![off..off + pi, ..]).t()))
        .collect()
}

fn add_noise(rng: &mut ChaCha8Rng, signals: &[Array2<f64>]) -> Result<(RawViews, Vec<f64>)> {
    let sigmas = noise_sigma(signals)?;
    let views = signals
        .iter()
        .zip(&sigmas)
        .map(|(z, &sigma)| {
            let noise = Array2::from_shape_simple_fn(z.raw_dim(), || sigma * rng.sample::<f64, _>(StandardNormal));
            z + &noise
        })
        .collect();
    Ok((RawViews::unnamed(views)?, sigmas))
}

/// Plant `U D Wᵀ` with per-view multipliers, columns listed in canonical order.
fn planted(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: &[usize],
    columns: &[(Pattern, f64)],
    view_scales: &[f64],
    seed: u64,
) -> Result<(RawViews, GroundTruth)> {
    let d = p.len();
    let patterns: Vec<Pattern> = columns.iter().map(|c| c.0).collect();
    let u = centred_scores(rng, n, columns.len())?;
    let w = block_loadings(rng, p, &patterns)?;
    let mut v = w.clone();
    for (j, &(_, dj)) in columns.iter().enumerate() {
        v.column_mut(j).mapv_inplace(|x| x * dj);
    }
    for (&off, (&pi, &c)) in block_offsets(p).iter().zip(p.iter().zip(view_scales)) {
        v.slice_mut(s![off..off + pi, ..]).mapv_inplace(|x| x * c);
    }
    let signals = split_signal(&u, &v, p);
    let (raw, noise_sigmas) = add_noise(rng, &signals)?;
    let (structure, _) = StructureMatrix::from_patterns(d, &patterns);
    let truth = GroundTruth { signals, structure, scores: u, loadings: Some(w), v, noise_sigmas, seed };
    Ok((raw, truth))
}

fn pattern(d: usize, views: &[usize]) -> Pattern {
    let mut mask = vec![false; d];
    for &i in views {
        mask[i] = true;
    }
    Pattern::from_views(d, &mask)
}

/// Two views, `n = 100`: two shared components (`D_0 = diag(1.5, 1.3)`) and
/// two individual components per view (`diag(1, 0.8)`, `diag(1, 0.7)`).
///
/// Scenario 1: `p = (25, 25)`, view multipliers `(1, 1)`; scenario 2: same
/// sizes, multipliers `(0.5, 1.5)`; scenario 3: `p = (25, 150)`.
pub fn gen_case1(scenario: u8, seed: u64) -> Result<(RawViews, GroundTruth)> {
    let (p, c) = match scenario {
        1 => ([25, 25], [1.0, 1.0]),
        2 => ([25, 25], [0.5, 1.5]),
        3 => ([25, 150], [1.0, 1.0]),
        other => return Err(SlideError::Parse(format!("case 1 has scenarios 1-3, got {other}"))),
    };
    let shared = pattern(2, &[0, 1]);
    let first = pattern(2, &[0]);
    let second = pattern(2, &[1]);
    let columns = [(shared, 1.5), (shared, 1.3), (first, 1.0), (first, 0.8), (second, 1.0), (second, 0.7)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    planted(&mut rng, 100, &p, &columns, &c, seed)
}

/// Weight on `ũ_1` that gives `u_1ᵀu_2 = c` after normalisation.
pub fn correlation_alpha(c: f64) -> f64 {
    c / (c + (1.0 - c * c).sqrt())
}

pub const CASE2_CORRELATION: f64 = 0.8;

/// Rank-one views `Z_1 = u_1 v_1ᵀ`, `Z_2 = u_2 v_2ᵀ` (or `u_1 v_2ᵀ`) with
/// `u_1ᵀu_2 = 0.8`, `n = 100`, `p = (25, 25)`.
pub fn gen_case2(seed: u64, second: SecondSignal) -> Result<(RawViews, GroundTruth)> {
    let (n, p) = (100, [25usize, 25]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ut = centred_scores(&mut rng, n, 2)?;
    let (u1, ut2) = (ut.column(0).to_owned(), ut.column(1).to_owned());
    let alpha = correlation_alpha(CASE2_CORRELATION);
    let u2 = (&u1 * alpha + &ut2 * (1.0 - alpha)) / (alpha * alpha + (1.0 - alpha) * (1.0 - alpha)).sqrt();
    let unit = |rng: &mut ChaCha8Rng, len: usize| -> Array1<f64> {
        let v = Array1::from_shape_simple_fn(len, || rng.random::<f64>());
        let norm = v.dot(&v).sqrt();
        v / norm
    };
    let v1 = unit(&mut rng, p[0]);
    let v2 = unit(&mut rng, p[1]);

    let outer = |a: &Array1<f64>, b: &Array1<f64>| {
        a.view().insert_axis(ndarray::Axis(1)).dot(&b.view().insert_axis(ndarray::Axis(0)))
    };
    let z2_score = match second {
        SecondSignal::Correlated => &u2,
        SecondSignal::SameScore => &u1,
    };
    let signals = vec![outer(&u1, &v1), outer(z2_score, &v2)];

    // SLIDE form: u_1 shared, the part of u_2 orthogonal to u_1 individual to view 2
    let (scores, v, structure) = match second {
        SecondSignal::Correlated => {
            let along = u1.dot(&u2);
            let perp = &u2 - &(&u1 * along);
            let perp_norm = perp.dot(&perp).sqrt();
            let mut scores = Array2::zeros((n, 2));
            scores.column_mut(0).assign(&u1);
            scores.column_mut(1).assign(&(&perp / perp_norm));
            let mut v = Array2::zeros((p[0] + p[1], 2));
            v.slice_mut(s![..p[0], 0]).assign(&v1);
            v.slice_mut(s![p[0].., 0]).assign(&(&v2 * along));
            v.slice_mut(s![p[0].., 1]).assign(&(&v2 * perp_norm));
            let s = StructureMatrix::parse("11,01", 2)?;
            (scores, v, s)
        }
        SecondSignal::SameScore => {
            let scores = u1.clone().insert_axis(ndarray::Axis(1));
            let mut v = Array2::zeros((p[0] + p[1], 1));
            v.slice_mut(s![..p[0], 0]).assign(&v1);
            v.slice_mut(s![p[0].., 0]).assign(&v2);
            (scores, v, StructureMatrix::parse("11", 2)?)
        }
    };
    let (raw, noise_sigmas) = add_noise(&mut rng, &signals)?;
    let truth = GroundTruth { signals, structure, scores, loadings: None, v, noise_sigmas, seed };
    Ok((raw, truth))
}

/// Three views, `n = 100`, `p_i = 100`, every pattern at rank 2 (14 components,
/// 8 per view).
pub fn gen_threeview(seed: u64) -> Result<(RawViews, GroundTruth)> {
    let groups: [(&[usize], [f64; 2]); 7] = [
        (&[0, 1, 2], [1.5, 1.3]),
        (&[0, 1], [1.0, 0.8]),
        (&[0, 2], [1.0, 0.7]),
        (&[1, 2], [1.0, 0.5]),
        (&[0], [1.2, 0.5]),
        (&[1], [0.9, 0.8]),
        (&[2], [0.5, 0.4]),
    ];
    let columns: Vec<(Pattern, f64)> = groups
        .iter()
        .flat_map(|(views, dvals)| dvals.iter().map(move |&dv| (pattern(3, views), dv)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    planted(&mut rng, 100, &[100, 100, 100], &columns, &[1.0, 1.0, 1.0], seed)
}

/// Per-view signals `scale_i · U V_iᵀ` from a model fitted on standardised data.
pub fn back_scaled_signals(u: ArrayView2<f64>, v: ArrayView2<f64>, p: &[usize], scales: &[f64]) -> Vec<Array2<f64>> {
    block_offsets(p)
        .iter()
        .zip(p)
        .zip(scales)
        .map(|((&off, &pi), &scale)| u.dot(&v.slice(s![off..off + pi, ..]).t()) * scale)
        .collect()
}
