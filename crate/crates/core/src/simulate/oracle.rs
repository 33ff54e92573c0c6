//! Reference decompositions: the exact noiseless construction and the
//! non-iterative SVD baseline.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::error::{Result, SlideError};
use crate::fit::{identifiability_warnings, orthogonalize_blocks, SlideModel};
use crate::linalg::{self, column_basis, thin_svd};
use crate::preprocess::{block_offsets, concatenate_views, MultiViewData};
use crate::structure::{PatternSet, StructureMatrix};

/// Singular values below this fraction of the largest one count as zero.
pub const EXACT_RANK_TOL: f64 = 1e-10;

fn hcat(parts: &[ArrayView2<f64>], n: usize) -> Array2<f64> {
    if parts.is_empty() {
        return Array2::zeros((n, 0));
    }
    concatenate(Axis(1), parts).expect("blocks share the row count")
}

/// Decompose noiseless signals `Z_1, …, Z_d` (`d ≤ 3`) exactly.
///
/// Patterns are processed from individual up to globally shared. For a
/// pattern over views `G`, the scores are an orthonormal basis of the part of
/// `[R_i]_{i∈G}` orthogonal to every column space `col(R_k)`, `k ∉ G`; the
/// residuals `R_i` then lose their projection onto those scores. Each pattern
/// block is finally rotated onto its singular vectors.
pub fn exact_decompose(signals: &[Array2<f64>]) -> Result<SlideModel> {
    let d = signals.len();
    if d == 0 {
        return Err(SlideError::EmptyInput);
    }
    if d > 3 {
        return Err(SlideError::UnsupportedViews(d));
    }
    let n = signals[0].nrows();
    if signals.iter().any(|z| z.nrows() != n) {
        return Err(SlideError::DimensionMismatch("signals differ in row count".into()));
    }
    let p: Vec<usize> = signals.iter().map(|z| z.ncols()).collect();
    let offsets = block_offsets(&p);

    let full = hcat(&signals.iter().map(|z| z.view()).collect::<Vec<_>>(), n);
    let top = thin_svd(full.view())?.s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(SlideModel::zero(d, n, p));
    }
    let cutoff = EXACT_RANK_TOL * top;

    let mut residuals: Vec<Array2<f64>> = signals.to_vec();
    let mut blocks = Vec::new();
    let patterns = PatternSet::new(d)?;
    for &pattern in patterns.patterns().iter().rev() {
        let outside: Vec<ArrayView2<f64>> =
            (0..d).filter(|&k| !pattern.contains(k)).map(|k| residuals[k].view()).collect();
        let inside: Vec<ArrayView2<f64>> = pattern.views().map(|i| residuals[i].view()).collect();
        let mut m = hcat(&inside, n);
        if !outside.is_empty() {
            let q = column_basis(hcat(&outside, n).view(), cutoff)?;
            m -= &q.dot(&q.t().dot(&m));
        }
        let scores = column_basis(m.view(), cutoff)?;
        if scores.ncols() == 0 {
            continue;
        }
        let mut v = Array2::zeros((offsets.last().unwrap() + p[d - 1], scores.ncols()));
        for i in pattern.views() {
            let vi = residuals[i].t().dot(&scores);
            residuals[i] -= &scores.dot(&vi.t());
            v.slice_mut(s![offsets[i]..offsets[i] + p[i], ..]).assign(&vi);
        }
        blocks.push((pattern, scores, v));
    }

    // canonical column order: most views first
    blocks.sort_by(|a, b| a.0.cmp(&b.0));
    let r: usize = blocks.iter().map(|b| b.1.ncols()).sum();
    let mut u = Array2::zeros((n, r));
    let mut v = Array2::zeros((full.ncols(), r));
    let mut columns = Vec::with_capacity(r);
    let mut at = 0;
    for (pattern, scores, loadings) in &blocks {
        let k = scores.ncols();
        u.slice_mut(s![.., at..at + k]).assign(scores);
        v.slice_mut(s![.., at..at + k]).assign(loadings);
        columns.extend(std::iter::repeat_n(*pattern, k));
        at += k;
    }
    let (structure, _) = StructureMatrix::from_patterns(d, &columns);
    let (u, v) = orthogonalize_blocks(u.view(), v.view(), &structure, &p)?;
    let residual = linalg::frobenius_sq((&full - &u.dot(&v.t())).view());
    let mut model = SlideModel {
        structure,
        u,
        v,
        p,
        residual_trace: vec![residual],
        iterations: 0,
        converged: true,
        warnings: Vec::new(),
    };
    model.warnings = identifiability_warnings(&model);
    Ok(model)
}

fn truncated_svd(a: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    let max = a.nrows().min(a.ncols());
    if k > max {
        return Err(SlideError::InfeasibleRank { r: k, max });
    }
    if k == 0 {
        return Ok(Array2::zeros(a.raw_dim()));
    }
    let svd = thin_svd(a)?;
    let mut us = svd.u.slice(s![.., ..k]).to_owned();
    for (c, &sv) in svd.s.iter().take(k).enumerate() {
        us.column_mut(c).mapv_inplace(|x| x * sv);
    }
    Ok(us.dot(&svd.vt.slice(s![..k, ..])))
}

/// Shared part from a rank-`shared_rank` SVD of the concatenated views, then
/// a rank-`individual_ranks[i]` SVD of each view's residual. Estimates are in
/// the standardised scale.
pub fn onestep_baseline(data: &MultiViewData, shared_rank: usize, individual_ranks: &[usize]) -> Result<Vec<Array2<f64>>> {
    if individual_ranks.len() != data.d() {
        return Err(SlideError::DimensionMismatch(format!(
            "{} individual ranks for {} views",
            individual_ranks.len(),
            data.d()
        )));
    }
    let x = concatenate_views(data);
    let shared = truncated_svd(x.view(), shared_rank)?;
    let mut out = Vec::with_capacity(data.d());
    for (i, (&off, &pi)) in data.offsets().iter().zip(&data.p()).enumerate() {
        let shared_i = shared.slice(s![.., off..off + pi]);
        let residual = &data.view(i) - &shared_i;
        let individual = truncated_svd(residual.view(), individual_ranks[i])?;
        out.push(&shared_i + &individual);
    }
    Ok(out)
}
