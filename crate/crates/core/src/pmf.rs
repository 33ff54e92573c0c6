//! Group-penalised matrix factorisation and candidate structure extraction.
//!
//! For a fixed penalty `λ` we minimise
//!
//! ```text
//! Σ_i ½‖X_i − U V_iᵀ‖²_F + λ Σ_i Σ_j ‖V_ij‖₂    subject to UᵀU = I
//! ```
//!
//! by alternating an exact block soft-thresholding step in `V` with an
//! orthogonal Procrustes step in `U`. Each step solves its subproblem exactly,
//! so the objective never increases. Sweeping `λ` over a log grid and reading
//! off which view blocks of `V` survive yields a short list of candidate
//! structures.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Result, SlideError};
use crate::linalg::{self, thin_svd};
use crate::preprocess::{concatenate_views, MultiViewData};
use crate::structure::{Pattern, StructureMatrix};

/// Relative singular-value cutoff below which Procrustes directions are dead.
pub const PROCRUSTES_RANK_TOL: f64 = 1e-12;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_GRID_LENGTH: usize = 50;
pub const DEFAULT_GRID_MIN: f64 = 0.01;

/// Largest singular value over the views. Any `λ` at or above it zeroes every
/// loading block.
pub fn lambda_max(data: &MultiViewData) -> Result<f64> {
    lambda_max_of_views(data.views())
}

pub fn lambda_max_of_views(views: &[Array2<f64>]) -> Result<f64> {
    let mut best = 0.0_f64;
    for v in views {
        best = best.max(linalg::spectral_norm(v.view())?);
    }
    Ok(best)
}

/// Ascending, logarithmically spaced penalty values.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
    lambda_max: f64,
}

impl LambdaGrid {
    pub fn geometric(min_lambda: f64, max_lambda: f64, length: usize) -> Result<Self> {
        if length < 2 {
            return Err(SlideError::BadGrid(format!("length {length} < 2")));
        }
        if !(min_lambda > 0.0) || !min_lambda.is_finite() {
            return Err(SlideError::BadGrid(format!("minimum {min_lambda} must be positive")));
        }
        if !(min_lambda < max_lambda) {
            return Err(SlideError::BadGrid(format!(
                "minimum {min_lambda} is not below lambda_max {max_lambda}"
            )));
        }
        let (lo, hi) = (min_lambda.ln(), max_lambda.ln());
        let step = (hi - lo) / (length - 1) as f64;
        let mut values: Vec<f64> = (0..length).map(|k| (lo + step * k as f64).exp()).collect();
        values[0] = min_lambda;
        values[length - 1] = max_lambda;
        Ok(LambdaGrid { values, lambda_max: max_lambda })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn make_grid(data: &MultiViewData, length: usize, min_lambda: f64) -> Result<LambdaGrid> {
    LambdaGrid::geometric(min_lambda, lambda_max(data)?, length)
}

/// `max(0, 1 − λ/‖g‖₂) · g`, the proximal map of `λ‖·‖₂`.
pub fn group_soft_threshold(g: ArrayView1<f64>, lambda: f64) -> Array1<f64> {
    let norm = g.dot(&g).sqrt();
    if norm <= lambda || norm == 0.0 {
        return Array1::zeros(g.len());
    }
    let shrink = 1.0 - lambda / norm;
    g.mapv(|v| v * shrink)
}

/// Orthonormal `U` maximising `tr(Uᵀ M)`: `U = R Qᵀ` from `M = R L Qᵀ`.
///
/// Fails with [`SlideError::RankDeficient`] when `M` has a singular value
/// below `1e-12 · σ_max`, since the maximiser is then not unique.
pub fn procrustes_align(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let svd = thin_svd(m)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let cutoff = PROCRUSTES_RANK_TOL * smax;
    if let Some(&smallest) = svd.s.iter().last() {
        if smallest <= cutoff || smallest == 0.0 {
            return Err(SlideError::RankDeficient { smallest, cutoff });
        }
    }
    Ok(svd.u.dot(&svd.vt))
}

/// Procrustes step that tolerates rank-deficient `M`.
///
/// Live singular directions are aligned as usual. Dead directions (those
/// paired with zero singular values, e.g. zeroed loading columns) are filled
/// from `prev` projected off the live subspace, so unused score columns do
/// not jump around between sweeps. Either way the result maximises `tr(Uᵀ M)`.
pub(crate) fn procrustes_update(m: ArrayView2<f64>, prev: ArrayView2<f64>) -> Result<Array2<f64>> {
    let r = m.ncols();
    let svd = thin_svd(m)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let cutoff = PROCRUSTES_RANK_TOL * smax;
    let live = svd.s.iter().filter(|&&v| v > cutoff && v > 0.0).count();
    let q = svd.v();
    let mut u = svd.u.slice(s![.., ..live]).dot(&q.slice(s![.., ..live]).t());
    if live == r {
        return Ok(u);
    }
    let r_live = svd.u.slice(s![.., ..live]);
    let q_dead = q.slice(s![.., live..]);
    let mut t = prev.dot(&q_dead);
    let overlap = r_live.t().dot(&t);
    t -= &r_live.dot(&overlap);
    let t_svd = thin_svd(t.view())?;
    let completion = if t_svd.s.iter().all(|&v| v > 1e-8) {
        t_svd.u.dot(&t_svd.vt)
    } else {
        // previous scores collapsed onto the live space; fall back to the
        // decomposition's own orthonormal completion
        svd.u.slice(s![.., live..]).to_owned()
    };
    u += &completion.dot(&q_dead.t());
    Ok(u)
}

/// `r` leading left singular vectors of `x`.
pub fn leading_left_singular_vectors(x: ArrayView2<f64>, r: usize) -> Result<Array2<f64>> {
    let svd = thin_svd(x)?;
    Ok(svd.u.slice(s![.., ..r]).to_owned())
}

/// Random `n × r` matrix with orthonormal columns.
pub fn random_orthonormal(n: usize, r: usize, seed: u64) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Array2::from_shape_simple_fn((n, r), || StandardNormal.sample(&mut rng));
    linalg::orthonormalize(g.view())
}

#[derive(Debug, Clone)]
pub struct PmfOptions {
    pub eps: f64,
    pub max_iter: usize,
    /// Number of components; defaults to `min(n, p)`.
    pub rank: Option<usize>,
    /// Starting scores; defaults to the leading left singular vectors of `X`.
    pub u0: Option<Array2<f64>>,
}

impl Default for PmfOptions {
    fn default() -> Self {
        PmfOptions { eps: DEFAULT_EPS, max_iter: DEFAULT_MAX_ITER, rank: None, u0: None }
    }
}

#[derive(Debug, Clone)]
pub struct PmfSolution {
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    pub lambda: f64,
    /// Objective at the start and after every sweep.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl PmfSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Penalised objective for arbitrary `(U, V)`.
pub fn pmf_objective(x: ArrayView2<f64>, p: &[usize], u: ArrayView2<f64>, v: ArrayView2<f64>, lambda: f64) -> f64 {
    let resid = &x - &u.dot(&v.t());
    let mut penalty = 0.0;
    let mut start = 0;
    for &pi in p {
        let block = v.slice(s![start..start + pi, ..]);
        for col in block.axis_iter(Axis(1)) {
            penalty += col.dot(&col).sqrt();
        }
        start += pi;
    }
    0.5 * linalg::frobenius_sq(resid.view()) + lambda * penalty
}

/// Exact minimiser of the penalised objective over `V` for fixed orthonormal `U`.
pub(crate) fn penalised_v_update(x: ArrayView2<f64>, p: &[usize], u: ArrayView2<f64>, lambda: f64) -> Array2<f64> {
    let mut v = x.t().dot(&u);
    let mut start = 0;
    for &pi in p {
        for j in 0..v.ncols() {
            let mut block = v.slice_mut(s![start..start + pi, j]);
            let shrunk = group_soft_threshold(block.view(), lambda);
            block.assign(&shrunk);
        }
        start += pi;
    }
    v
}

pub fn solve_pmf(data: &MultiViewData, lambda: f64, opts: &PmfOptions) -> Result<PmfSolution> {
    let x = concatenate_views(data);
    solve_pmf_concat(x.view(), &data.p(), lambda, opts)
}

pub(crate) fn solve_pmf_concat(
    x: ArrayView2<f64>,
    p: &[usize],
    lambda: f64,
    opts: &PmfOptions,
) -> Result<PmfSolution> {
    if !(lambda >= 0.0) {
        return Err(SlideError::BadGrid(format!("lambda {lambda} must be non-negative")));
    }
    let (n, ptot) = x.dim();
    let max_rank = n.min(ptot);
    let r = opts.rank.unwrap_or(max_rank);
    if r > max_rank {
        return Err(SlideError::InfeasibleRank { r, max: max_rank });
    }
    let mut u = match &opts.u0 {
        Some(u0) => {
            if u0.dim() != (n, r) {
                return Err(SlideError::DimensionMismatch(format!(
                    "initial scores are {:?}, expected ({n}, {r})",
                    u0.dim()
                )));
            }
            u0.clone()
        }
        None => leading_left_singular_vectors(x, r)?,
    };
    let mut v = x.t().dot(&u);
    let mut trace = vec![pmf_objective(x, p, u.view(), v.view(), lambda)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        v = penalised_v_update(x, p, u.view(), lambda);
        u = procrustes_update(x.dot(&v).view(), u.view())?;
        let f = pmf_objective(x, p, u.view(), v.view(), lambda);
        if !f.is_finite() {
            return Err(SlideError::NonFinite("penalised objective"));
        }
        let prev = *trace.last().unwrap();
        trace.push(f);
        if prev - f < opts.eps {
            converged = true;
            break;
        }
    }
    Ok(PmfSolution { u, v, lambda, objective_trace: trace, iterations, converged })
}

/// Canonical structure read off the nonzero view blocks of `v`.
pub fn support_structure(v: ArrayView2<f64>, p: &[usize]) -> StructureMatrix {
    let d = p.len();
    let offsets = crate::preprocess::block_offsets(p);
    let columns: Vec<Pattern> = (0..v.ncols())
        .map(|j| {
            let flags: Vec<bool> = (0..d)
                .map(|i| {
                    let block = v.slice(s![offsets[i]..offsets[i] + p[i], j]);
                    block.iter().any(|&x| x != 0.0)
                })
                .collect();
            Pattern::from_views(d, &flags)
        })
        .collect();
    StructureMatrix::from_patterns(d, &columns).0
}

#[derive(Debug, Clone)]
pub struct CandidateOptions {
    pub eps: f64,
    pub max_iter: usize,
    /// Total starts per `λ`: the singular-vector start plus `restarts - 1` random ones.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for CandidateOptions {
    fn default() -> Self {
        CandidateOptions { eps: DEFAULT_EPS, max_iter: DEFAULT_MAX_ITER, restarts: 1, seed: 0 }
    }
}

/// Distinct structures found along the `λ` path, in order of first appearance.
#[derive(Debug, Clone, Default)]
pub struct CandidateSet {
    pub structures: Vec<StructureMatrix>,
    pub generating_lambda: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    /// Add `s` (or record `lambda` against an existing equivalent entry).
    pub fn insert(&mut self, s: StructureMatrix, lambda: f64) {
        match self.structures.iter().position(|t| *t == s) {
            Some(k) => {
                if !self.generating_lambda[k].contains(&lambda) {
                    self.generating_lambda[k].push(lambda);
                }
            }
            None => {
                self.structures.push(s);
                self.generating_lambda.push(vec![lambda]);
            }
        }
    }

    pub fn from_structures(structures: Vec<StructureMatrix>) -> Self {
        let mut set = CandidateSet::default();
        for s in structures {
            set.insert(s, f64::NAN);
        }
        set.generating_lambda.iter_mut().for_each(Vec::clear);
        set
    }

    pub fn position(&self, s: &StructureMatrix) -> Option<usize> {
        self.structures.iter().position(|t| t == s)
    }
}

/// Solve at every grid point and collect the distinct supports.
pub fn extract_candidates(data: &MultiViewData, grid: &LambdaGrid, opts: &CandidateOptions) -> Result<CandidateSet> {
    let x = concatenate_views(data);
    let p = data.p();
    let (n, ptot) = x.dim();
    let r = n.min(ptot);
    let svd_start = leading_left_singular_vectors(x.view(), r)?;
    let restarts = opts.restarts.max(1);

    let per_lambda: Vec<std::result::Result<Vec<StructureMatrix>, String>> = grid
        .values()
        .par_iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let mut found = Vec::with_capacity(restarts);
            for start in 0..restarts {
                let u0 = if start == 0 {
                    svd_start.clone()
                } else {
                    let seed = opts.seed ^ ((k as u64) << 32) ^ (start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    random_orthonormal(n, r, seed).map_err(|e| e.to_string())?
                };
                let pmf = PmfOptions { eps: opts.eps, max_iter: opts.max_iter, rank: Some(r), u0: Some(u0) };
                let sol = solve_pmf_concat(x.view(), &p, lambda, &pmf)
                    .map_err(|e| format!("lambda {lambda:e}: {e}"))?;
                if !sol.converged {
                    log::debug!("lambda {lambda:e} stopped after {} sweeps without converging", sol.iterations);
                }
                found.push((sol.objective(), support_structure(sol.v.view(), &p)));
            }
            // lowest objective first; stable for ties
            found.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(found.into_iter().map(|(_, s)| s).collect())
        })
        .collect();

    let mut set = CandidateSet::default();
    for (lambda, outcome) in grid.values().iter().zip(per_lambda) {
        match outcome {
            Ok(structures) => {
                for s in structures {
                    set.insert(s, *lambda);
                }
            }
            Err(msg) => {
                log::warn!("skipping {msg}");
                set.warnings.push(msg);
            }
        }
    }
    Ok(set)
}
