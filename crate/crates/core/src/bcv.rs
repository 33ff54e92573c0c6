//! Structure selection by bi-cross-validation.
//!
//! Rows are split into `k_r` folds shared by all views and each view's
//! columns into `k_c` folds. For every (row fold, column fold) pair the
//! held-out cells `X^11` of every view are predicted from the held-in block
//! `X^22` and the two off-diagonal blocks:
//!
//! ```text
//! X̂_i^11 = X^12 · V̂ (V̂ᵀV̂)⁺ · Ûᵀ X_i^21
//! ```
//!
//! where `Û`, `V̂` carry the decomposition fitted to the re-standardised
//! `X^22`, back-scaled and augmented with a column for the held-in means.
//! Errors are scaled by the variation of the centred `X_i^11` and summed over
//! views and holdouts.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SlideError};
use crate::fit::{fit_with_structure, FitOptions};
use crate::linalg::{self, submatrix, thin_svd};
use crate::pmf::{CandidateSet, DEFAULT_EPS, DEFAULT_MAX_ITER};
use crate::preprocess::{center_and_scale, RawViews};
use crate::structure::StructureMatrix;

/// Relative cutoff on the eigenvalues of `V̂ᵀV̂` when forming its pseudo-inverse.
pub const GRAM_PINV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub row_folds: Vec<Vec<usize>>,
    /// `column_folds[view][fold]`
    pub column_folds: Vec<Vec<Vec<usize>>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn k_r(&self) -> usize {
        self.row_folds.len()
    }

    pub fn k_c(&self) -> usize {
        self.column_folds.first().map_or(0, Vec::len)
    }

    /// Holdouts in `(row fold, column fold)` order.
    pub fn holdouts(&self) -> Vec<(usize, usize)> {
        let kc = self.k_c();
        (0..self.k_r()).flat_map(|a| (0..kc).map(move |b| (a, b))).collect()
    }
}

fn balanced_partition(len: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    let (base, extra) = (len / k, len % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = idx[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    folds
}

/// Random balanced row and column folds; rows are shuffled once for all views.
pub fn make_folds(n: usize, p: &[usize], k_r: usize, k_c: usize, seed: u64) -> Result<FoldPlan> {
    if k_r < 2 || n < 2 * k_r {
        return Err(SlideError::TooFewSamples { n, folds: k_r });
    }
    if k_c < 2 {
        return Err(SlideError::TooFewColumns { view: 0, p: p.first().copied().unwrap_or(0), folds: k_c });
    }
    for (i, &pi) in p.iter().enumerate() {
        if pi < k_c {
            return Err(SlideError::TooFewColumns { view: i, p: pi, folds: k_c });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let row_folds = balanced_partition(n, k_r, &mut rng);
    let column_folds = p.iter().map(|&pi| balanced_partition(pi, k_c, &mut rng)).collect();
    Ok(FoldPlan { row_folds, column_folds, seed })
}

fn complement(len: usize, held_out: &[usize]) -> Vec<usize> {
    let mut out_flag = vec![false; len];
    for &i in held_out {
        out_flag[i] = true;
    }
    (0..len).filter(|&i| !out_flag[i]).collect()
}

#[derive(Debug, Clone)]
pub struct BcvOptions {
    pub k_r: usize,
    pub k_c: usize,
    pub seed: u64,
    pub eps: f64,
    pub max_iter: usize,
    /// Insert `(ÛᵀÛ)⁺` between `V̂`'s pseudo-inverse and `Ûᵀ`, as in the
    /// single-matrix form of the criterion. Off by default.
    pub gram_corrected: bool,
}

impl Default for BcvOptions {
    fn default() -> Self {
        BcvOptions { k_r: 3, k_c: 3, seed: 0, eps: DEFAULT_EPS, max_iter: DEFAULT_MAX_ITER, gram_corrected: false }
    }
}

/// Result of scoring one structure on one holdout.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutOutcome {
    pub error: f64,
    /// Views whose centred held-out block was identically zero (contributed 0).
    pub skipped_views: Vec<usize>,
    /// Set when the structure had to be cut down to fit the held-in block.
    pub truncated_to: Option<usize>,
}

/// `M (MᵀM)⁺` with the relative eigenvalue cutoff, via the SVD of `M`.
fn right_pinv_of_gram(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let svd = thin_svd(m)?;
    let top = svd.s.first().copied().unwrap_or(0.0);
    let keep = svd.s.iter().filter(|&&v| v > 0.0 && v * v > GRAM_PINV_TOL * top * top).count();
    let mut a = svd.u.slice(s![.., ..keep]).to_owned();
    for (c, &sv) in svd.s.iter().take(keep).enumerate() {
        a.column_mut(c).mapv_inplace(|x| x / sv);
    }
    Ok(a.dot(&svd.vt.slice(s![..keep, ..])))
}

/// Moore–Penrose inverse of a symmetric positive semi-definite matrix.
fn sym_pinv(g: ArrayView2<f64>) -> Result<Array2<f64>> {
    let svd = thin_svd(g)?;
    let top = svd.s.first().copied().unwrap_or(0.0);
    let mut out = Array2::zeros(g.raw_dim());
    for (c, &sv) in svd.s.iter().enumerate() {
        if sv > 0.0 && sv > GRAM_PINV_TOL * top {
            let uc = svd.u.column(c).insert_axis(Axis(1));
            let vc = svd.vt.row(c).insert_axis(Axis(0));
            out += &(uc.dot(&vc) / sv);
        }
    }
    Ok(out)
}

pub fn bcv_error_one_holdout(
    raw: &RawViews,
    plan: &FoldPlan,
    holdout: (usize, usize),
    s: &StructureMatrix,
    opts: &BcvOptions,
) -> Result<HoldoutOutcome> {
    let (a, b) = holdout;
    let d = raw.d();
    if s.d() != d {
        return Err(SlideError::DimensionMismatch(format!("structure over {} views, data has {d}", s.d())));
    }
    let rows_out = &plan.row_folds[a];
    let rows_in = complement(raw.n(), rows_out);
    let n_in = rows_in.len();

    let mut cols_in = Vec::with_capacity(d);
    let mut cols_out = Vec::with_capacity(d);
    for (i, view) in raw.views().iter().enumerate() {
        let out = plan.column_folds[i][b].clone();
        cols_in.push(complement(view.ncols(), &out));
        cols_out.push(out);
    }

    let held_in: Vec<Array2<f64>> = raw
        .views()
        .iter()
        .zip(&cols_in)
        .map(|(v, c)| submatrix(v.view(), &rows_in, c))
        .collect();
    let data22 = center_and_scale(&RawViews::new(held_in.clone(), raw.names().to_vec())?)?;

    let p_in: usize = cols_in.iter().map(Vec::len).sum();
    let feasible = n_in.min(p_in);
    let (s_eff, truncated_to) = if s.r() > feasible {
        (s.truncated(feasible), Some(feasible))
    } else {
        (s.clone(), None)
    };
    let model = fit_with_structure(
        &data22,
        &s_eff,
        &FitOptions { eps: opts.eps, max_iter: opts.max_iter, u0: None },
    )?;
    let r = model.r();

    // Û = [1/√n_r · 1, U]
    let inv_sqrt = 1.0 / (n_in as f64).sqrt();
    let mut u_hat = Array2::<f64>::from_elem((n_in, r + 1), inv_sqrt);
    u_hat.slice_mut(s![.., 1..]).assign(&model.u);

    // V̂ = [1/√n_r · X^22ᵀ 1, V'] with V'_i = V_i · scale_i
    let mut v_hat = Array2::<f64>::zeros((p_in, r + 1));
    let mut off = 0;
    for (i, x22) in held_in.iter().enumerate() {
        let pi = x22.ncols();
        let sums: Array1<f64> = x22.sum_axis(Axis(0));
        v_hat.slice_mut(s![off..off + pi, 0]).assign(&(&sums * inv_sqrt));
        let scaled = &model.view_loadings(i) * data22.frobenius_scales()[i];
        v_hat.slice_mut(s![off..off + pi, 1..]).assign(&scaled);
        off += pi;
    }

    let x12_parts: Vec<Array2<f64>> = raw
        .views()
        .iter()
        .zip(&cols_in)
        .map(|(v, c)| submatrix(v.view(), rows_out, c))
        .collect();
    let x12 = concatenate(Axis(1), &x12_parts.iter().map(|m| m.view()).collect::<Vec<_>>())
        .expect("held-out rows agree across views");

    let mut left = x12.dot(&right_pinv_of_gram(v_hat.view())?);
    if opts.gram_corrected {
        left = left.dot(&sym_pinv(u_hat.t().dot(&u_hat).view())?);
    }

    let mut error = 0.0;
    let mut skipped_views = Vec::new();
    for (i, view) in raw.views().iter().enumerate() {
        let x11 = submatrix(view.view(), rows_out, &cols_out[i]);
        let x21 = submatrix(view.view(), &rows_in, &cols_out[i]);
        let (centered, _) = linalg::column_center(x11.view());
        let denom = linalg::frobenius_sq(centered.view());
        let scale = linalg::frobenius_sq(x11.view());
        if denom == 0.0 || denom <= 1e-28 * scale {
            log::warn!("holdout ({a}, {b}): centred block of view {} is zero; skipped", i + 1);
            skipped_views.push(i);
            continue;
        }
        let pred = left.dot(&u_hat.t().dot(&x21));
        error += linalg::frobenius_sq((&x11 - &pred).view()) / denom;
    }
    if !error.is_finite() {
        return Err(SlideError::NonFinite("holdout prediction error"));
    }
    Ok(HoldoutOutcome { error, skipped_views, truncated_to })
}

#[derive(Debug, Clone, Serialize)]
pub struct BcvReport {
    /// Candidate structure encodings, in evaluation order.
    pub candidates: Vec<String>,
    pub d: usize,
    /// `fold_errors[candidate][holdout]`, holdouts in `(row, column)` order.
    pub fold_errors: Vec<Vec<f64>>,
    /// Sum over holdouts; `null` in JSON when a candidate failed.
    pub total_errors: Vec<f64>,
    pub selected: usize,
    pub seed: u64,
    pub folds: FoldPlan,
    pub gram_corrected: bool,
    /// Diagnostics: failures, truncations, skipped views.
    pub notes: Vec<String>,
}

impl BcvReport {
    pub fn selected_structure(&self) -> StructureMatrix {
        StructureMatrix::parse(&self.candidates[self.selected], self.d).expect("encoded by us")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Score every candidate on every holdout and pick the minimiser.
///
/// Ties (relative difference below `1e-12`) go to the candidate with fewer
/// components, then to the one with fewer nonzero blocks.
pub fn select_structure(raw: &RawViews, candidates: &CandidateSet, opts: &BcvOptions) -> Result<BcvReport> {
    if candidates.is_empty() {
        return Err(SlideError::DimensionMismatch("no candidate structures to compare".into()));
    }
    let plan = make_folds(raw.n(), &raw.p(), opts.k_r, opts.k_c, opts.seed)?;
    let holdouts = plan.holdouts();
    let jobs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|c| (0..holdouts.len()).map(move |h| (c, h)))
        .collect();
    let outcomes: Vec<Result<HoldoutOutcome>> = jobs
        .par_iter()
        .map(|&(c, h)| bcv_error_one_holdout(raw, &plan, holdouts[h], &candidates.structures[c], opts))
        .collect();

    let nh = holdouts.len();
    let mut fold_errors = vec![vec![0.0; nh]; candidates.len()];
    let mut failed = vec![false; candidates.len()];
    let mut notes = Vec::new();
    for ((c, h), outcome) in jobs.into_iter().zip(outcomes) {
        let s = &candidates.structures[c];
        match outcome {
            Ok(o) => {
                fold_errors[c][h] = o.error;
                if let Some(rt) = o.truncated_to {
                    notes.push(format!("candidate {} ({s}) truncated to rank {rt} on holdout {h}", c));
                }
                for v in o.skipped_views {
                    notes.push(format!("holdout {h}: view {} skipped (zero centred block)", v + 1));
                }
            }
            Err(e) => {
                fold_errors[c][h] = f64::INFINITY;
                failed[c] = true;
                let msg = format!("candidate {c} ({s}) failed on holdout {h}: {e}");
                log::warn!("{msg}");
                notes.push(msg);
            }
        }
    }
    notes.dedup();
    let total_errors: Vec<f64> = fold_errors
        .iter()
        .zip(&failed)
        .map(|(errs, &bad)| if bad { f64::INFINITY } else { errs.iter().sum() })
        .collect();

    let mut selected = 0;
    for c in 1..candidates.len() {
        if prefer(c, selected, &total_errors, &candidates.structures) {
            selected = c;
        }
    }
    Ok(BcvReport {
        candidates: candidates.structures.iter().map(StructureMatrix::encode).collect(),
        d: raw.d(),
        fold_errors,
        total_errors,
        selected,
        seed: opts.seed,
        folds: plan,
        gram_corrected: opts.gram_corrected,
        notes,
    })
}

fn prefer(c: usize, best: usize, totals: &[f64], structures: &[StructureMatrix]) -> bool {
    let (ec, eb) = (totals[c], totals[best]);
    if !ec.is_finite() {
        return false;
    }
    if !eb.is_finite() {
        return true;
    }
    let tie = (ec - eb).abs() <= 1e-12 * ec.abs().max(eb.abs());
    if !tie {
        return ec < eb;
    }
    let (sc, sb) = (&structures[c], &structures[best]);
    (sc.r(), sc.ones()) < (sb.r(), sb.ones())
}
