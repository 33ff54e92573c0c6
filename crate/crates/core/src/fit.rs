//! Least-squares fit of the decomposition for a fixed structure.
//!
//! Alternates `V ← mask ⊙ XᵀU` (the exact minimiser over block-sparse `V`
//! when `U` is orthonormal) with a Procrustes update of `U`, then
//! re-expresses each pattern's block `U_b V_bᵀ` through its own SVD so that
//! loadings within a pattern are orthogonal with decreasing norms.

use ndarray::{s, Array2, ArrayView2, Axis};
use ndarray_linalg::SVD;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlideError};
use crate::linalg::{self, apply_sign_convention};
use crate::pmf::{leading_left_singular_vectors, procrustes_update, DEFAULT_EPS, DEFAULT_MAX_ITER};
use crate::preprocess::{block_offsets, concatenate_views, MultiViewData};
use crate::structure::StructureMatrix;

/// Smallest singular value a pattern's per-view loadings may have before the
/// fit is reported as not identifiable.
pub const IDENTIFIABILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Stop once the squared change of `UVᵀ` between sweeps drops below this.
    pub eps: f64,
    pub max_iter: usize,
    pub u0: Option<Array2<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { eps: DEFAULT_EPS, max_iter: DEFAULT_MAX_ITER, u0: None }
    }
}

/// Orthonormal scores `U` and block-sparse loadings `V` for a structure.
#[derive(Debug, Clone)]
pub struct SlideModel {
    pub structure: StructureMatrix,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
    /// Column counts of the views, used to split `V` into per-view blocks.
    pub p: Vec<usize>,
    /// `‖X − UVᵀ‖²_F` after each sweep.
    pub residual_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl SlideModel {
    pub fn zero(d: usize, n: usize, p: Vec<usize>) -> Self {
        let ptot = p.iter().sum();
        SlideModel {
            structure: StructureMatrix::empty(d),
            u: Array2::zeros((n, 0)),
            v: Array2::zeros((ptot, 0)),
            p,
            residual_trace: Vec::new(),
            iterations: 0,
            converged: true,
            warnings: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn r(&self) -> usize {
        self.u.ncols()
    }

    pub fn d(&self) -> usize {
        self.p.len()
    }

    /// Loadings block `V_i` (`p_i × r`).
    pub fn view_loadings(&self, i: usize) -> ArrayView2<'_, f64> {
        let start: usize = self.p[..i].iter().sum();
        self.v.slice(s![start..start + self.p[i], ..])
    }

    /// Fitted signal `U V_iᵀ` for view `i`, in the standardised scale.
    pub fn fitted_view(&self, i: usize) -> Array2<f64> {
        self.u.dot(&self.view_loadings(i).t())
    }

    pub fn fitted_views(&self) -> Vec<Array2<f64>> {
        (0..self.d()).map(|i| self.fitted_view(i)).collect()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        self.v.axis_iter(Axis(1)).map(|c| c.dot(&c).sqrt()).collect()
    }

    pub fn residual(&self, x: ArrayView2<f64>) -> f64 {
        linalg::frobenius_sq((&x - &self.u.dot(&self.v.t())).view())
    }

    /// Canonical structure read back from the nonzero blocks of `V`.
    pub fn support(&self) -> StructureMatrix {
        crate::pmf::support_structure(self.v.view(), &self.p)
    }
}

fn loading_mask(s: &StructureMatrix, p: &[usize]) -> Array2<f64> {
    let offsets = block_offsets(p);
    let ptot = p.iter().sum();
    let mut mask = Array2::zeros((ptot, s.r()));
    for j in 0..s.r() {
        for (i, (&off, &pi)) in offsets.iter().zip(p).enumerate() {
            if s.entry(i, j) {
                mask.slice_mut(s![off..off + pi, j]).fill(1.0);
            }
        }
    }
    mask
}

/// Which leading singular vector starts each structure column.
///
/// The first V-step explains `Σ_j ‖mask_j ∘ Xᵀu_{σ(j)}‖²`, so `σ` is the
/// assignment maximising that sum. Kept as the identity unless another
/// assignment is strictly better: when every view's Gram matrix is diagonal in
/// the singular basis, a mismatched order is already a fixed point of the
/// alternating updates.
fn initial_assignment(x: ArrayView2<f64>, u0: ArrayView2<f64>, mask: &Array2<f64>) -> Vec<usize> {
    let r = u0.ncols();
    let xu = x.t().dot(&u0).mapv(|e| e * e);
    // gain[k][j]: energy of singular vector k captured by column j's support
    let gain = xu.t().dot(mask);
    let total = |order: &[usize]| order.iter().enumerate().map(|(j, &k)| gain[[k, j]]).sum::<f64>();
    let identity: Vec<usize> = (0..r).collect();
    let best = max_weight_assignment(&gain);
    if total(&best) > total(&identity) * (1.0 + 1e-12) {
        best
    } else {
        identity
    }
}

/// Hungarian algorithm on a square matrix; returns `row[j]` for every column `j`.
fn max_weight_assignment(w: &Array2<f64>) -> Vec<usize> {
    let n = w.nrows();
    let cost = |i: usize, j: usize| -w[[i - 1, j - 1]];
    let (mut u, mut v) = (vec![0.0; n + 1], vec![0.0; n + 1]);
    let (mut row_of, mut way) = (vec![0usize; n + 1], vec![0usize; n + 1]);
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let (mut delta, mut j1) = (f64::INFINITY, 0);
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=n).map(|j| row_of[j] - 1).collect()
}

pub fn fit_with_structure(data: &MultiViewData, s: &StructureMatrix, opts: &FitOptions) -> Result<SlideModel> {
    if s.d() != data.d() {
        return Err(SlideError::DimensionMismatch(format!(
            "structure over {} views, data has {}",
            s.d(),
            data.d()
        )));
    }
    let x = concatenate_views(data);
    fit_concat(x.view(), &data.p(), s, opts)
}

pub(crate) fn fit_concat(x: ArrayView2<f64>, p: &[usize], s: &StructureMatrix, opts: &FitOptions) -> Result<SlideModel> {
    let (n, ptot) = x.dim();
    let r = s.r();
    if r == 0 {
        let mut model = SlideModel::zero(s.d(), n, p.to_vec());
        model.residual_trace.push(linalg::frobenius_sq(x));
        return Ok(model);
    }
    let max_rank = n.min(ptot);
    if r > max_rank {
        return Err(SlideError::InfeasibleRank { r, max: max_rank });
    }
    let mask = loading_mask(s, p);
    let mut u = match &opts.u0 {
        Some(u0) if u0.dim() == (n, r) => u0.clone(),
        Some(u0) => {
            return Err(SlideError::DimensionMismatch(format!(
                "initial scores are {:?}, expected ({n}, {r})",
                u0.dim()
            )))
        }
        None => {
            let u0 = leading_left_singular_vectors(x, r)?;
            let order = initial_assignment(x, u0.view(), &mask);
            u0.select(Axis(1), &order)
        }
    };

    let mut v = &x.t().dot(&u) * &mask;
    let mut signal = u.dot(&v.t());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        v = &x.t().dot(&u) * &mask;
        u = procrustes_update(x.dot(&v).view(), u.view())?;
        let next = u.dot(&v.t());
        let change = linalg::frobenius_sq((&next - &signal).view());
        let resid = linalg::frobenius_sq((&x - &next).view());
        if !resid.is_finite() {
            return Err(SlideError::NonFinite("structured fit residual"));
        }
        trace.push(resid);
        signal = next;
        if change < opts.eps {
            converged = true;
            break;
        }
    }
    // final V-step so V is optimal for the returned U
    v = &x.t().dot(&u) * &mask;

    let mut warnings = Vec::new();
    let mut structure = s.clone();
    let dead: Vec<usize> = (0..r).filter(|&j| v.column(j).iter().all(|&e| e == 0.0)).collect();
    if !dead.is_empty() {
        let msg = format!("dropping {} component(s) whose loadings vanished", dead.len());
        log::warn!("{msg}");
        warnings.push(msg);
        let keep: Vec<usize> = (0..r).filter(|j| !dead.contains(j)).collect();
        u = u.select(Axis(1), &keep);
        v = v.select(Axis(1), &keep);
        structure = structure.without_columns(&dead);
    }

    let (u, v) = orthogonalize_blocks(u.view(), v.view(), &structure, p)?;
    let mut model = SlideModel {
        structure,
        u,
        v,
        p: p.to_vec(),
        residual_trace: trace,
        iterations,
        converged,
        warnings,
    };
    model.warnings.extend(identifiability_warnings(&model));
    Ok(model)
}

/// Rotate each pattern block onto its own singular vectors.
///
/// For the columns `J` of one pattern, `U_J V_Jᵀ = (U_J B) (A Σ)ᵀ` where
/// `V_J = A Σ Bᵀ`; the SVD is taken over the rows of the views in the pattern
/// only, so rows outside it stay exactly zero. `UVᵀ` is unchanged.
pub fn orthogonalize_blocks(
    u: ArrayView2<f64>,
    v: ArrayView2<f64>,
    s: &StructureMatrix,
    p: &[usize],
) -> Result<(Array2<f64>, Array2<f64>)> {
    let offsets = block_offsets(p);
    let mut u_out = u.to_owned();
    let mut v_out = v.to_owned();
    for (pattern, cols) in s.pattern_blocks() {
        let rows: Vec<usize> = pattern
            .views()
            .flat_map(|i| offsets[i]..offsets[i] + p[i])
            .collect();
        let col_idx: Vec<usize> = cols.clone().collect();
        let sub = linalg::submatrix(v, &rows, &col_idx);
        let (a, sigma, bt) = sub.svd(true, true)?;
        let a = a.expect("requested");
        let b = bt.expect("requested").t().to_owned();
        let k = col_idx.len();
        let mut new_u = u.slice(s![.., cols.clone()]).dot(&b);
        let mut new_v = Array2::<f64>::zeros((rows.len(), k));
        for (c, &sv) in sigma.iter().enumerate() {
            new_v.column_mut(c).assign(&(&a.column(c) * sv));
        }
        let mut vt = new_v.t().to_owned();
        apply_sign_convention(&mut new_u, Some(&mut vt));
        let new_v = vt.t();
        u_out.slice_mut(s![.., cols.clone()]).assign(&new_u);
        for (c, &j) in col_idx.iter().enumerate() {
            let mut col = v_out.column_mut(j);
            col.fill(0.0);
            for (ri, &row) in rows.iter().enumerate() {
                col[row] = new_v[[ri, c]];
            }
        }
    }
    Ok((u_out, v_out))
}

/// Check that, within every pattern, each participating view's loadings are
/// linearly independent. Returns one message per violation.
pub fn identifiability_warnings(model: &SlideModel) -> Vec<String> {
    let mut out = Vec::new();
    for (pattern, cols) in model.structure.pattern_blocks() {
        for i in pattern.views() {
            let block = model.view_loadings(i).slice(s![.., cols.clone()]).to_owned();
            let smallest = match block.svd(false, false) {
                Ok((_, sv, _)) => {
                    if sv.len() < cols.len() {
                        0.0
                    } else {
                        sv.iter().copied().fold(f64::INFINITY, f64::min)
                    }
                }
                Err(_) => 0.0,
            };
            if !(smallest > IDENTIFIABILITY_TOL) {
                out.push(format!(
                    "pattern {pattern}: loadings in view {} are not linearly independent (smallest singular value {smallest:e})",
                    i + 1
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewVariance {
    pub name: String,
    /// Number of components touching this view.
    pub rank: usize,
    pub explained: f64,
}

/// Share of each view's squared Frobenius norm captured by the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub views: Vec<ViewVariance>,
    pub total_rank: usize,
    pub explained: f64,
}

pub fn variance_explained(model: &SlideModel, data: &MultiViewData) -> VarianceReport {
    let mut views = Vec::with_capacity(data.d());
    let (mut fit_total, mut data_total) = (0.0, 0.0);
    for i in 0..data.d() {
        let fitted = linalg::frobenius_sq(model.fitted_view(i).view());
        let total = linalg::frobenius_sq(data.view(i));
        fit_total += fitted;
        data_total += total;
        views.push(ViewVariance {
            name: data.names()[i].clone(),
            rank: model.structure.view_rank(i),
            explained: if total > 0.0 { fitted / total } else { 0.0 },
        });
    }
    VarianceReport {
        views,
        total_rank: model.r(),
        explained: if data_total > 0.0 { fit_total / data_total } else { 0.0 },
    }
}

/// Serialised model: structure encoding, dimensions, and row-major `U`, `V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub structure: String,
    pub d: usize,
    pub n: usize,
    pub p: Vec<usize>,
    pub r: usize,
    #[serde(default)]
    pub view_names: Vec<String>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl ModelDocument {
    pub fn from_model(model: &SlideModel, view_names: &[String]) -> Self {
        ModelDocument {
            structure: model.structure.encode(),
            d: model.d(),
            n: model.n(),
            p: model.p.clone(),
            r: model.r(),
            view_names: view_names.to_vec(),
            u: model.u.iter().copied().collect(),
            v: model.v.iter().copied().collect(),
        }
    }

    pub fn into_model(self) -> Result<SlideModel> {
        let structure = StructureMatrix::parse(&self.structure, self.d)?;
        if structure.r() != self.r || self.p.len() != self.d {
            return Err(SlideError::Parse("model document dimensions disagree".into()));
        }
        let ptot: usize = self.p.iter().sum();
        let shape_err = |e: ndarray::ShapeError| SlideError::Parse(e.to_string());
        let u = Array2::from_shape_vec((self.n, self.r), self.u).map_err(shape_err)?;
        let v = Array2::from_shape_vec((ptot, self.r), self.v).map_err(shape_err)?;
        Ok(SlideModel {
            structure,
            u,
            v,
            p: self.p,
            residual_trace: Vec::new(),
            iterations: 0,
            converged: true,
            warnings: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{center_and_scale, RawViews};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_data(seed: u64, n: usize, p: &[usize]) -> MultiViewData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let views = p
            .iter()
            .map(|&pi| Array2::from_shape_simple_fn((n, pi), || StandardNormal.sample(&mut rng)))
            .collect();
        center_and_scale(&RawViews::unnamed(views).unwrap()).unwrap()
    }

    #[test]
    fn empty_structure_gives_zero_model() {
        let data = random_data(1, 8, &[3, 4]);
        let model = fit_with_structure(&data, &StructureMatrix::empty(2), &FitOptions::default()).unwrap();
        assert_eq!(model.r(), 0);
        for i in 0..2 {
            assert!(model.fitted_view(i).iter().all(|&v| v == 0.0));
        }
        assert!((model.residual_trace[0] - 2.0).abs() < 1e-12);
        let report = variance_explained(&model, &data);
        assert!(report.views.iter().all(|v| v.explained == 0.0));
        assert_eq!(report.explained, 0.0);
    }

    #[test]
    fn all_ones_matches_truncated_svd() {
        let data = random_data(2, 12, &[4, 5]);
        let x = concatenate_views(&data);
        let s = StructureMatrix::all_shared(2, 3);
        let model = fit_with_structure(&data, &s, &FitOptions::default()).unwrap();
        let sv = linalg::thin_svd(x.view()).unwrap().s;
        let tail: f64 = sv.iter().skip(3).map(|v| v * v).sum();
        assert!((model.residual(x.view()) - tail).abs() < 1e-9);
    }

    #[test]
    fn zero_blocks_are_exact_and_scores_orthonormal() {
        let data = random_data(3, 15, &[5, 4, 6]);
        let s = StructureMatrix::parse("111,110,101,100,001", 3).unwrap();
        let model = fit_with_structure(&data, &s, &FitOptions::default()).unwrap();
        assert!(linalg::orthonormality_defect(model.u.view()) < 1e-8);
        for j in 0..model.r() {
            for i in 0..3 {
                if !model.structure.entry(i, j) {
                    assert!(model.view_loadings(i).column(j).iter().all(|&v| v == 0.0));
                }
            }
        }
        for w in model.residual_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        assert_eq!(model.support(), s);
    }

    #[test]
    fn orthogonalisation_preserves_product_and_orthogonalises() {
        let data = random_data(4, 10, &[4, 4]);
        let x = concatenate_views(&data);
        let s = StructureMatrix::parse("11,11,10", 2).unwrap();
        let mask = loading_mask(&s, &data.p());
        let u = crate::pmf::random_orthonormal(10, 3, 17).unwrap();
        let v = &x.t().dot(&u) * &mask;
        // shared columns are not orthogonal before rotation
        assert!(v.column(0).dot(&v.column(1)).abs() > 1e-6);
        let (u2, v2) = orthogonalize_blocks(u.view(), v.view(), &s, &data.p()).unwrap();
        let before = u.dot(&v.t());
        let after = u2.dot(&v2.t());
        assert!(linalg::frobenius_sq((&before - &after).view()).sqrt() < 1e-10);
        assert!(v2.column(0).dot(&v2.column(1)).abs() < 1e-8);
        assert!(v2.column(0).dot(&v2.column(0)) >= v2.column(1).dot(&v2.column(1)));
        assert!(linalg::orthonormality_defect(u2.view()) < 1e-12);
        // single-column pattern is only sign-adjusted
        let c = v2.column(2);
        assert!((c.dot(&c) - v.column(2).dot(&v.column(2))).abs() < 1e-12);
    }

    #[test]
    fn variance_fraction_equals_fitted_norm() {
        let data = random_data(5, 20, &[6, 6]);
        let s = StructureMatrix::parse("11,10,01", 2).unwrap();
        let model = fit_with_structure(&data, &s, &FitOptions::default()).unwrap();
        let report = variance_explained(&model, &data);
        for i in 0..2 {
            let direct = linalg::frobenius_sq(model.fitted_view(i).view());
            assert!((report.views[i].explained - direct).abs() < 1e-12);
            assert_eq!(report.views[i].rank, 2);
            assert!((0.0..=1.0 + 1e-9).contains(&report.views[i].explained));
        }
        assert_eq!(report.total_rank, 3);
    }

    #[test]
    fn full_rank_all_ones_explains_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = Array2::from_shape_simple_fn((9, 2), || StandardNormal.sample(&mut rng));
        let b = Array2::from_shape_simple_fn((2, 7), || StandardNormal.sample(&mut rng));
        let z = a.dot(&b);
        let raw = RawViews::unnamed(vec![z.slice(s![.., ..3]).to_owned(), z.slice(s![.., 3..]).to_owned()]).unwrap();
        let data = center_and_scale(&raw).unwrap();
        let model = fit_with_structure(&data, &StructureMatrix::all_shared(2, 2), &FitOptions::default()).unwrap();
        let report = variance_explained(&model, &data);
        assert!((report.explained - 1.0).abs() < 1e-9);
        for v in &report.views {
            assert!((v.explained - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn refit_from_converged_scores_is_stable() {
        let data = random_data(7, 14, &[5, 5]);
        let x = concatenate_views(&data);
        let s = StructureMatrix::parse("11,10,01", 2).unwrap();
        let opts = FitOptions { eps: 1e-12, ..FitOptions::default() };
        let model = fit_with_structure(&data, &s, &opts).unwrap();
        let again = fit_with_structure(&data, &s, &FitOptions { u0: Some(model.u.clone()), ..opts }).unwrap();
        assert!((model.residual(x.view()) - again.residual(x.view())).abs() < 1e-10);
    }

    #[test]
    fn infeasible_rank_and_wrong_views() {
        let data = random_data(8, 3, &[2, 2]);
        let s = StructureMatrix::all_shared(2, 4);
        assert!(matches!(
            fit_with_structure(&data, &s, &FitOptions::default()),
            Err(SlideError::InfeasibleRank { .. })
        ));
        let s3 = StructureMatrix::all_shared(3, 1);
        assert!(fit_with_structure(&data, &s3, &FitOptions::default()).is_err());
    }

    #[test]
    fn model_document_round_trip() {
        let data = random_data(9, 10, &[3, 4]);
        let s = StructureMatrix::parse("11,01", 2).unwrap();
        let model = fit_with_structure(&data, &s, &FitOptions::default()).unwrap();
        let doc = ModelDocument::from_model(&model, data.names());
        let text = serde_json::to_string(&doc).unwrap();
        let back: ModelDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back, doc);
        let restored = back.into_model().unwrap();
        assert_eq!(restored.u, model.u);
        assert_eq!(restored.v, model.v);
        assert_eq!(restored.structure, model.structure);
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![Vec::new()];
        }
        let mut out = Vec::new();
        for perm in permutations(n - 1) {
            for at in 0..=perm.len() {
                let mut p = perm.clone();
                p.insert(at, n - 1);
                out.push(p);
            }
        }
        out
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 1..=6 {
            for _ in 0..10 {
                let w = Array2::from_shape_simple_fn((n, n), || StandardNormal.sample(&mut rng));
                let score = |order: &[usize]| order.iter().enumerate().map(|(j, &k)| w[[k, j]]).sum::<f64>();
                let best = permutations(n).iter().map(|p| score(p)).fold(f64::NEG_INFINITY, f64::max);
                let got = max_weight_assignment(&w);
                let mut seen = got.clone();
                seen.sort_unstable();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
                assert!((score(&got) - best).abs() < 1e-12, "{} vs {best}", score(&got));
            }
        }
    }

    #[test]
    fn start_order_follows_the_structure() {
        // every view's Gram matrix is diagonal in the same basis, and the
        // view-1-only direction outweighs the (1, 2)-shared one
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Array2::from_shape_simple_fn((16, 3), || StandardNormal.sample(&mut rng));
        let u = linalg::orthonormalize(linalg::column_center(g.view()).0.view()).unwrap();
        let col = |j: usize, w: f64| u.column(j).to_owned().insert_axis(Axis(1)) * w;
        let parts = |cols: &[Array2<f64>]| ndarray::concatenate(Axis(1), &cols.iter().map(|c| c.view()).collect::<Vec<_>>()).unwrap();
        let views = vec![
            parts(&[col(0, 1.0), col(1, 0.3), col(2, 1.2)]),
            parts(&[col(0, 1.0), col(1, 0.5)]),
            col(0, 1.0),
        ];
        let data = center_and_scale(&RawViews::unnamed(views).unwrap()).unwrap();
        let s = StructureMatrix::parse("111,110,100", 3).unwrap();
        let model = fit_with_structure(&data, &s, &FitOptions { eps: 1e-20, max_iter: 5000, u0: None }).unwrap();
        let x = concatenate_views(&data);
        assert!(model.residual(x.view()) < 1e-20, "{}", model.residual(x.view()));
    }
}
